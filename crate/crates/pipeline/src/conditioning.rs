//! Conditioning payload for the editor: what changed, said in words, and
//! where, as masks with spatial properties.

use std::collections::BTreeSet;
use std::path::Path;

use river_core::mask::MaskError;
use river_core::twin::{
    diff_twins, parse_twin, removal_description, to_text_descriptions, validate_against_schema, MaskRef, ObjectKey,
    SpatialProps, TwinDiff, ValidationReport, VideoTwin,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::WireGuidance;

#[derive(Debug, Error)]
pub enum ConditioningError {
    #[error("edit is not a valid twin: {}", summary(.0))]
    InvalidEdit(ValidationReport),
    #[error("guidance mask for frame {frame}, object {id}: {source}")]
    Mask {
        frame: usize,
        id: u64,
        #[source]
        source: MaskError,
    },
}

fn summary(report: &ValidationReport) -> String {
    match report.violations.first() {
        Some(v) => format!(
            "{} violation(s), first {} at {}",
            report.violations.len(),
            v.kind,
            v.path
        ),
        None => "no violations".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceEntry {
    pub frame: usize,
    pub id: u64,
    pub mask_ref: MaskRef,
    pub spatial: SpatialProps,
    pub removed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningPayload {
    pub text_descriptions: Vec<String>,
    pub spatial_guidance: Vec<GuidanceEntry>,
    pub frame_count: usize,
}

impl ConditioningPayload {
    pub fn keys(&self) -> BTreeSet<ObjectKey> {
        self.spatial_guidance
            .iter()
            .map(|g| ObjectKey {
                frame_index: g.frame,
                id: g.id,
            })
            .collect()
    }

    /// Editor wire form, with sidecar masks read relative to `base_dir`.
    pub fn wire_guidance(&self, base_dir: &Path) -> Result<Vec<WireGuidance>, ConditioningError> {
        self.spatial_guidance
            .iter()
            .map(|g| {
                let mask = g.mask_ref.resolve(base_dir).map_err(|source| ConditioningError::Mask {
                    frame: g.frame,
                    id: g.id,
                    source,
                })?;
                Ok(WireGuidance {
                    frame: g.frame,
                    id: g.id,
                    mask,
                    spatial: g.spatial,
                    removed: g.removed,
                })
            })
            .collect()
    }
}

/// A payload with its edited twin and the diff it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub payload: ConditioningPayload,
    pub edited: VideoTwin,
    pub diff: TwinDiff,
}

/// Parses and checks `edit_text` against `original`, then emits one
/// description and one guidance entry per touched (frame, id), in
/// (frame, id) order. Removed objects keep their original mask and are
/// flagged.
pub fn build_conditioning(original: &VideoTwin, edit_text: &str) -> Result<Conditioning, ConditioningError> {
    let report = validate_against_schema(edit_text, original);
    if !report.valid {
        return Err(ConditioningError::InvalidEdit(report));
    }
    let edited = parse_twin(edit_text).map_err(|_| ConditioningError::InvalidEdit(report))?;
    let diff = diff_twins(original, &edited);
    let removed: BTreeSet<ObjectKey> = diff.removed.iter().copied().collect();
    let mut kept = to_text_descriptions(&edited, &diff).into_iter();

    let mut text_descriptions = Vec::new();
    let mut spatial_guidance = Vec::new();
    for key in diff.touched() {
        let (source, is_removed) = if removed.contains(&key) {
            (original, true)
        } else {
            (&edited, false)
        };
        let inst = source
            .instance(key.frame_index, key.id)
            .expect("touched keys exist in the twin they come from");
        text_descriptions.push(if is_removed {
            removal_description(key.frame_index, key.id, &inst.category)
        } else {
            kept.next().expect("one description per kept key")
        });
        spatial_guidance.push(GuidanceEntry {
            frame: key.frame_index,
            id: key.id,
            mask_ref: inst.mask_ref.clone(),
            spatial: inst.spatial,
            removed: is_removed,
        });
    }
    Ok(Conditioning {
        payload: ConditioningPayload {
            text_descriptions,
            spatial_guidance,
            frame_count: edited.frame_count,
        },
        edited,
        diff,
    })
}
