//! Random canonical twins.
//!
//! Every generated number lies on the 1e-6 grid, so the twins survive
//! canonical serialization unchanged.

use rand::seq::IndexedRandom;
use rand::Rng;
use river_core::mask::RleMask;
use river_core::twin::{MaskRef, ObjectInstance, SpatialProps, VideoTwin};

pub const CATEGORIES: [&str; 5] = ["dog", "cat", "car", "person", "ball"];
pub const ATTRIBUTES: [&str; 6] = ["red", "brown", "small", "furry", "shiny", "striped"];

#[derive(Debug, Clone, Copy)]
pub struct TwinShape {
    pub max_frames: usize,
    pub max_objects: usize,
    /// Draw x, y, depth and size from a three-value set so exact ties are common.
    pub tie_prone: bool,
}

impl Default for TwinShape {
    fn default() -> Self {
        Self {
            max_frames: 5,
            max_objects: 6,
            tie_prone: false,
        }
    }
}

fn grid<R: Rng>(rng: &mut R, lo: u32) -> f64 {
    rng.random_range(lo..=1_000_000) as f64 / 1e6
}

fn coord<R: Rng>(rng: &mut R, shape: &TwinShape, positive: bool) -> f64 {
    if shape.tie_prone {
        *[0.25, 0.5, 0.75].choose(rng).expect("non-empty")
    } else {
        grid(rng, if positive { 1 } else { 0 })
    }
}

fn random_mask<R: Rng>(rng: &mut R) -> RleMask {
    let w = rng.random_range(1..6u32);
    let h = rng.random_range(1..6u32);
    let bits: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.4)).collect();
    RleMask::encode(&bits, w, h).expect("sized bitmap")
}

pub fn random_instance<R: Rng>(rng: &mut R, id: u64, shape: &TwinShape) -> ObjectInstance {
    let n_attrs = rng.random_range(0..3);
    let attributes = (0..n_attrs)
        .map(|_| ATTRIBUTES.choose(rng).expect("non-empty").to_string())
        .collect();
    let mask_ref = if rng.random_bool(0.3) {
        MaskRef::Inline(random_mask(rng))
    } else {
        MaskRef::Path(format!("masks/{id}.rle"))
    };
    ObjectInstance {
        id,
        category: CATEGORIES.choose(rng).expect("non-empty").to_string(),
        attributes,
        mask_ref,
        spatial: SpatialProps {
            x: coord(rng, shape, false),
            y: coord(rng, shape, false),
            depth: coord(rng, shape, false),
            size: coord(rng, shape, true),
        },
    }
}

/// A twin with 1..=max_frames frames drawing ids from a pool of
/// max_objects tracked objects, each present in a frame with probability 0.75.
pub fn random_twin<R: Rng>(rng: &mut R, shape: &TwinShape) -> VideoTwin {
    let n_frames = rng.random_range(1..=shape.max_frames);
    let pool = rng.random_range(0..=shape.max_objects);
    let ids: Vec<u64> = {
        let mut ids: Vec<u64> = (0..(2 * shape.max_objects as u64 + 1)).collect();
        use rand::seq::SliceRandom;
        ids.shuffle(rng);
        ids.truncate(pool);
        ids
    };
    let mut frames = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let mut instances = Vec::new();
        for &id in &ids {
            if rng.random_bool(0.75) {
                instances.push(random_instance(rng, id, shape));
            }
        }
        frames.push(instances);
    }
    let mut twin = VideoTwin::from_frames(frames);
    if rng.random_bool(0.5) {
        twin.metadata
            .insert("source".into(), format!("clip_{}", rng.random_range(0..100)));
        twin.metadata.insert("resolution".into(), "832x480".into());
    }
    twin
}

/// Removes, edits, moves and adds objects at random.
pub fn mutate_twin<R: Rng>(rng: &mut R, twin: &VideoTwin, shape: &TwinShape) -> VideoTwin {
    let mut out = twin.clone();
    for frame in &mut out.frames {
        frame.instances.retain(|_| !rng.random_bool(0.2));
        for inst in &mut frame.instances {
            if rng.random_bool(0.3) {
                inst.attributes = vec![ATTRIBUTES.choose(rng).expect("non-empty").to_string()];
            }
            if rng.random_bool(0.2) {
                inst.category = CATEGORIES.choose(rng).expect("non-empty").to_string();
            }
            if rng.random_bool(0.2) {
                inst.spatial.x = coord(rng, shape, false);
                inst.spatial.size = coord(rng, shape, true);
            }
            if rng.random_bool(0.1) {
                inst.mask_ref = MaskRef::Inline(random_mask(rng));
            }
        }
        if rng.random_bool(0.3) {
            let id = 100 + rng.random_range(0..5);
            if frame.instance(id).is_none() {
                frame.instances.push(random_instance(rng, id, shape));
            }
        }
    }
    out.canonicalize();
    out
}
