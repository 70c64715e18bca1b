//! Digital twin representation of a video.
//!
//! A [`VideoTwin`] holds one [`FrameTwin`] per frame, each listing the object
//! instances detected in that frame. Instance ids are stable across frames,
//! so the same id in two frames denotes the same tracked object.
//!
//! Twins travel as JSON documents with a fixed key order:
//!
//! ```text
//! {"frame_count":T,"metadata":{..},"frames":[{"frame_index":t,"instances":[
//!   {"id":i,"category":c,"attributes":[..],"mask_ref":m,
//!    "spatial":{"x":..,"y":..,"depth":..,"size":..}}]}]}
//! ```
//!
//! `mask_ref` is either a relative sidecar path or an inline RLE object
//! `{"rle":[..],"width":w,"height":h}`. Coordinates, depth and size are
//! normalized to `[0, 1]`; size is mask area over frame area.

mod describe;
mod diff;
mod schema;
mod serialize;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{MaskError, RleMask};

pub use describe::{removal_description, to_text_descriptions};
pub use diff::{apply_diff, diff_twins, FieldChange, ObjectKey, TwinDiff};
pub use schema::{parse_twin, resolve_path, validate_against_schema, ValidationReport, Violation, ViolationKind};
pub use serialize::{instance_to_json, serialize_twin};

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("twin document is not parseable at line {line}, column {column}: {message}")]
    NotParseable {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation ({kind}) at {path}: {message}")]
    SchemaViolation {
        path: String,
        kind: ViolationKind,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialProps {
    pub x: f64,
    pub y: f64,
    /// Relative depth sampled at the centroid, 0 is nearest.
    pub depth: f64,
    /// Mask area over frame area.
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskRef {
    Path(String),
    Inline(RleMask),
}

impl MaskRef {
    /// Loads the referenced mask, reading sidecar paths relative to `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<RleMask, MaskError> {
        match self {
            MaskRef::Inline(mask) => {
                mask.check()?;
                Ok(mask.clone())
            }
            MaskRef::Path(rel) => RleMask::read_sidecar(&base_dir.join(rel)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: u64,
    pub category: String,
    pub attributes: Vec<String>,
    pub mask_ref: MaskRef,
    pub spatial: SpatialProps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTwin {
    pub frame_index: usize,
    pub instances: Vec<ObjectInstance>,
}

impl FrameTwin {
    pub fn instance(&self, id: u64) -> Option<&ObjectInstance> {
        self.instances.iter().find(|o| o.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTwin {
    pub frame_count: usize,
    pub frames: Vec<FrameTwin>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl VideoTwin {
    /// Builds a twin from frames, assigning frame indices by position.
    pub fn from_frames(frames: Vec<Vec<ObjectInstance>>) -> Self {
        let frames: Vec<FrameTwin> = frames
            .into_iter()
            .enumerate()
            .map(|(frame_index, instances)| FrameTwin { frame_index, instances })
            .collect();
        let mut twin = Self {
            frame_count: frames.len(),
            frames,
            metadata: BTreeMap::new(),
        };
        twin.canonicalize();
        twin
    }

    /// Sorts frames by index and instances by id.
    pub fn canonicalize(&mut self) {
        self.frames.sort_by_key(|f| f.frame_index);
        for frame in &mut self.frames {
            frame.instances.sort_by_key(|o| o.id);
        }
    }

    pub fn frame(&self, frame_index: usize) -> Option<&FrameTwin> {
        self.frames.get(frame_index).filter(|f| f.frame_index == frame_index)
    }

    pub fn instance(&self, frame_index: usize, id: u64) -> Option<&ObjectInstance> {
        self.frame(frame_index).and_then(|f| f.instance(id))
    }

    /// Frame indices in which `id` is present, ascending.
    pub fn frames_present(&self, id: u64) -> Vec<usize> {
        self.frames
            .iter()
            .filter(|f| f.instance(id).is_some())
            .map(|f| f.frame_index)
            .collect()
    }

    /// Checks every document invariant; the report is empty for valid twins.
    pub fn validate(&self) -> ValidationReport {
        let text = serialize_twin(self);
        schema::check_text(&text).1
    }
}
