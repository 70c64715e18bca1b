//! Building a digital twin from a video directory.
//!
//! A `twin.json` next to the frames wins; otherwise the frames go to the
//! perception service. Its response lists instances per frame:
//!
//! ```text
//! {"frames":[{"instances":[{"id":0,"category":"car","attributes":["red"],
//!   "mask":{"rle":[..],"width":W,"height":H},"centroid":[px,py],"depth":0.4}]}]}
//! ```
//!
//! Centroids are in pixels and get normalized by the frame size; size is the
//! mask area fraction.

use std::fs;
use std::path::{Path, PathBuf};

use river_core::canonical::quantize;
use river_core::mask::RleMask;
use river_core::twin::{parse_twin, MaskRef, ObjectInstance, SpatialProps, TwinError, VideoTwin};
use serde_json::Value;
use thiserror::Error;

use crate::clients::{ClientError, PerceptionClient, PerceptionRequest};
use crate::frames::{load_frames, to_base64, FramesError};

pub const TWIN_FILE: &str = "twin.json";

#[derive(Debug, Error)]
pub enum BuildTwinError {
    #[error("perception service unreachable: {0}")]
    PerceptionUnreachable(ClientError),
    #[error("malformed perception response at {path}: {message}")]
    MalformedPerceptionResponse { path: String, message: String },
    #[error("no {TWIN_FILE} in {0} and no perception endpoint")]
    FixtureMissing(PathBuf),
    #[error("fixture twin {path}: {source}")]
    Fixture {
        path: PathBuf,
        #[source]
        source: TwinError,
    },
    #[error("fixture twin {path} is invalid: {message}")]
    InvalidFixture { path: PathBuf, message: String },
    #[error(transparent)]
    Frames(#[from] FramesError),
}

fn malformed(path: impl Into<String>, message: impl Into<String>) -> BuildTwinError {
    BuildTwinError::MalformedPerceptionResponse {
        path: path.into(),
        message: message.into(),
    }
}

/// Loads and validates `dir/twin.json`, if present.
pub fn load_fixture_twin(dir: &Path) -> Result<Option<VideoTwin>, BuildTwinError> {
    let path = dir.join(TWIN_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => {
            return Err(BuildTwinError::Frames(FramesError::Io { path, source: e }));
        }
    };
    let twin = parse_twin(&text).map_err(|source| BuildTwinError::Fixture {
        path: path.clone(),
        source,
    })?;
    let report = twin.validate();
    if let Some(v) = report.violations.first() {
        return Err(BuildTwinError::InvalidFixture {
            path,
            message: format!("{} at {}: {}", v.kind, v.path, v.message),
        });
    }
    Ok(Some(twin))
}

/// Fixture twin when present, else one perception request over all frames
/// (resized to `resolution` when given).
pub fn build_twin(
    video_ref: &Path,
    perception: Option<&dyn PerceptionClient>,
    resolution: Option<(u32, u32)>,
    labels_hint: &[String],
) -> Result<VideoTwin, BuildTwinError> {
    if let Some(twin) = load_fixture_twin(video_ref)? {
        return Ok(twin);
    }
    let Some(client) = perception else {
        return Err(BuildTwinError::FixtureMissing(video_ref.to_path_buf()));
    };
    perceive_twin(video_ref, client, resolution, labels_hint)
}

/// Always asks the perception service, ignoring any fixture twin.
pub fn perceive_twin(
    video_ref: &Path,
    client: &dyn PerceptionClient,
    resolution: Option<(u32, u32)>,
    labels_hint: &[String],
) -> Result<VideoTwin, BuildTwinError> {
    let frames = load_frames(video_ref, resolution)?;
    let (w, h) = (frames[0].width(), frames[0].height());
    let request = PerceptionRequest {
        frames: frames.iter().map(to_base64).collect::<Result<_, _>>()?,
        labels_hint: labels_hint.to_vec(),
    };
    let response = client.perceive(&request).map_err(|e| match e {
        ClientError::BadResponse { message, .. } => malformed("$", message),
        other => BuildTwinError::PerceptionUnreachable(other),
    })?;
    twin_from_perception(&response, frames.len(), w, h)
}

fn number(v: &Value, path: &str) -> Result<f64, BuildTwinError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| malformed(path, "expected a finite number"))
}

fn unit(v: f64, path: &str) -> Result<f64, BuildTwinError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(malformed(path, format!("{v} is outside [0, 1]")));
    }
    Ok(quantize(v))
}

fn instance(v: &Value, path: &str, width: u32, height: u32) -> Result<ObjectInstance, BuildTwinError> {
    let field = |name: &str| {
        v.get(name)
            .ok_or_else(|| malformed(format!("{path}.{name}"), "missing field"))
    };
    let id = field("id")?
        .as_u64()
        .ok_or_else(|| malformed(format!("{path}.id"), "expected a non-negative integer"))?;
    let category = field("category")?
        .as_str()
        .ok_or_else(|| malformed(format!("{path}.category"), "expected a string"))?
        .to_string();
    let attributes = field("attributes")?
        .as_array()
        .ok_or_else(|| malformed(format!("{path}.attributes"), "expected an array"))?
        .iter()
        .enumerate()
        .map(|(k, a)| {
            a.as_str()
                .map(str::to_string)
                .ok_or_else(|| malformed(format!("{path}.attributes[{k}]"), "expected a string"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mask: RleMask =
        serde_json::from_value(field("mask")?.clone()).map_err(|e| malformed(format!("{path}.mask"), e.to_string()))?;
    mask.check()
        .map_err(|e| malformed(format!("{path}.mask"), e.to_string()))?;
    if (mask.width, mask.height) != (width, height) {
        return Err(malformed(
            format!("{path}.mask"),
            format!("mask is {}x{}, frames are {width}x{height}", mask.width, mask.height),
        ));
    }
    let centroid = field("centroid")?
        .as_array()
        .filter(|c| c.len() == 2)
        .ok_or_else(|| malformed(format!("{path}.centroid"), "expected [x, y]"))?;
    let x = number(&centroid[0], &format!("{path}.centroid[0]"))? / width as f64;
    let y = number(&centroid[1], &format!("{path}.centroid[1]"))? / height as f64;
    let depth = number(field("depth")?, &format!("{path}.depth"))?;
    let spatial = SpatialProps {
        x: unit(x, &format!("{path}.centroid[0]"))?,
        y: unit(y, &format!("{path}.centroid[1]"))?,
        depth: unit(depth, &format!("{path}.depth"))?,
        size: quantize(mask.area_fraction()),
    };
    Ok(ObjectInstance {
        id,
        category,
        attributes,
        mask_ref: MaskRef::Inline(mask),
        spatial,
    })
}

/// Assembles a twin from a perception response, checking it field by field.
pub fn twin_from_perception(
    response: &Value,
    frame_count: usize,
    width: u32,
    height: u32,
) -> Result<VideoTwin, BuildTwinError> {
    let frames = response
        .get("frames")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("frames", "expected an array of frames"))?;
    if frames.len() != frame_count {
        return Err(malformed(
            "frames",
            format!("{} frames returned for {frame_count} sent", frames.len()),
        ));
    }
    let mut out = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let list = frame
            .get("instances")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed(format!("frames[{t}].instances"), "expected an array"))?;
        let mut instances = Vec::with_capacity(list.len());
        for (k, v) in list.iter().enumerate() {
            let inst = instance(v, &format!("frames[{t}].instances[{k}]"), width, height)?;
            if instances.iter().any(|o: &ObjectInstance| o.id == inst.id) {
                return Err(malformed(
                    format!("frames[{t}].instances[{k}].id"),
                    format!("duplicate id {}", inst.id),
                ));
            }
            instances.push(inst);
        }
        out.push(instances);
    }
    Ok(VideoTwin::from_frames(out))
}
