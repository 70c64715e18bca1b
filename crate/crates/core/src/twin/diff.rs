use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{FrameTwin, MaskRef, ObjectInstance, VideoTwin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectKey {
    pub frame_index: usize,
    pub id: u64,
}

/// One changed field. `field` is `category`, `attributes`, `mask_ref` or
/// `spatial.<x|y|depth|size>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldChange {
    pub frame_index: usize,
    pub id: u64,
    pub field: String,
    pub old: Value,
    pub new: Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TwinDiff {
    pub changed: Vec<FieldChange>,
    pub removed: Vec<ObjectKey>,
    pub added: Vec<(usize, ObjectInstance)>,
}

impl TwinDiff {
    pub fn is_empty(&self) -> bool {
        self.changed.is_empty() && self.removed.is_empty() && self.added.is_empty()
    }

    /// Every (frame, id) touched by the diff, ascending.
    pub fn touched(&self) -> BTreeSet<ObjectKey> {
        let mut keys: BTreeSet<ObjectKey> = self
            .changed
            .iter()
            .map(|c| ObjectKey {
                frame_index: c.frame_index,
                id: c.id,
            })
            .collect();
        keys.extend(self.removed.iter().copied());
        keys.extend(self.added.iter().map(|(t, o)| ObjectKey {
            frame_index: *t,
            id: o.id,
        }));
        keys
    }
}

fn mask_json(mask: &MaskRef) -> Value {
    serde_json::to_value(mask).expect("mask serializes")
}

fn field_values(inst: &ObjectInstance) -> [(&'static str, Value); 7] {
    let s = &inst.spatial;
    [
        ("category", Value::from(inst.category.clone())),
        ("attributes", Value::from(inst.attributes.clone())),
        ("mask_ref", mask_json(&inst.mask_ref)),
        ("spatial.x", Value::from(s.x)),
        ("spatial.y", Value::from(s.y)),
        ("spatial.depth", Value::from(s.depth)),
        ("spatial.size", Value::from(s.size)),
    ]
}

fn empty_frame(frame_index: usize) -> FrameTwin {
    FrameTwin {
        frame_index,
        instances: Vec::new(),
    }
}

/// Field-level delta from `original` to `edited`, keyed on (frame, id).
///
/// Entries are ordered by frame, then id, then field in document order.
pub fn diff_twins(original: &VideoTwin, edited: &VideoTwin) -> TwinDiff {
    let mut diff = TwinDiff::default();
    let frame_total = original.frames.len().max(edited.frames.len());
    for t in 0..frame_total {
        let before = original.frames.get(t).cloned().unwrap_or_else(|| empty_frame(t));
        let after = edited.frames.get(t).cloned().unwrap_or_else(|| empty_frame(t));
        let ids: BTreeSet<u64> = before
            .instances
            .iter()
            .chain(after.instances.iter())
            .map(|o| o.id)
            .collect();
        for id in ids {
            match (before.instance(id), after.instance(id)) {
                (Some(old), Some(new)) => {
                    for ((field, a), (_, b)) in field_values(old).into_iter().zip(field_values(new)) {
                        if a != b {
                            diff.changed.push(FieldChange {
                                frame_index: t,
                                id,
                                field: field.to_string(),
                                old: a,
                                new: b,
                            });
                        }
                    }
                }
                (Some(_), None) => diff.removed.push(ObjectKey { frame_index: t, id }),
                (None, Some(new)) => diff.added.push((t, new.clone())),
                (None, None) => unreachable!("id came from one of the frames"),
            }
        }
    }
    diff
}

fn set_field(inst: &mut ObjectInstance, field: &str, value: &Value) -> bool {
    let number = || value.as_f64();
    match field {
        "category" => value.as_str().map(|s| inst.category = s.to_string()).is_some(),
        "attributes" => serde_json::from_value(value.clone())
            .map(|a| inst.attributes = a)
            .is_ok(),
        "mask_ref" => serde_json::from_value(value.clone()).map(|m| inst.mask_ref = m).is_ok(),
        "spatial.x" => number().map(|v| inst.spatial.x = v).is_some(),
        "spatial.y" => number().map(|v| inst.spatial.y = v).is_some(),
        "spatial.depth" => number().map(|v| inst.spatial.depth = v).is_some(),
        "spatial.size" => number().map(|v| inst.spatial.size = v).is_some(),
        _ => false,
    }
}

/// Applies `diff` to `original`. Inverse of [`diff_twins`]:
/// `apply_diff(a, &diff_twins(a, b)) == b` for twins with equal frame counts.
pub fn apply_diff(original: &VideoTwin, diff: &TwinDiff) -> VideoTwin {
    let mut twin = original.clone();
    for change in &diff.changed {
        if let Some(inst) = twin
            .frames
            .get_mut(change.frame_index)
            .and_then(|f| f.instances.iter_mut().find(|o| o.id == change.id))
        {
            let applied = set_field(inst, &change.field, &change.new);
            debug_assert!(applied, "unknown field {}", change.field);
        }
    }
    for key in &diff.removed {
        if let Some(frame) = twin.frames.get_mut(key.frame_index) {
            frame.instances.retain(|o| o.id != key.id);
        }
    }
    for (t, inst) in &diff.added {
        while twin.frames.len() <= *t {
            let next = twin.frames.len();
            twin.frames.push(empty_frame(next));
        }
        twin.frames[*t].instances.push(inst.clone());
    }
    twin.canonicalize();
    twin
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twin::SpatialProps;

    fn inst(id: u64, attrs: &[&str]) -> ObjectInstance {
        ObjectInstance {
            id,
            category: "dog".into(),
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            mask_ref: MaskRef::Path(format!("m/{id}.rle")),
            spatial: SpatialProps {
                x: 0.5,
                y: 0.5,
                depth: 0.3,
                size: 0.1,
            },
        }
    }

    #[test]
    fn identity_diff_is_empty() {
        let twin = VideoTwin::from_frames(vec![vec![inst(0, &["brown"]), inst(3, &[])]]);
        assert!(diff_twins(&twin, &twin).is_empty());
    }

    #[test]
    fn removal_across_frames() {
        let original = VideoTwin::from_frames(vec![
            vec![inst(0, &[]), inst(3, &[])],
            vec![inst(0, &[]), inst(3, &[])],
            vec![inst(3, &[])],
        ]);
        let edited = VideoTwin::from_frames(vec![vec![inst(0, &[])], vec![inst(0, &[])], vec![]]);
        let diff = diff_twins(&original, &edited);
        let expected: Vec<ObjectKey> = (0..3).map(|t| ObjectKey { frame_index: t, id: 3 }).collect();
        assert_eq!(diff.removed, expected);
        assert!(diff.changed.is_empty() && diff.added.is_empty());
        assert_eq!(apply_diff(&original, &diff), edited);
    }

    #[test]
    fn attribute_change_is_whole_list() {
        let original = VideoTwin::from_frames(vec![vec![inst(0, &["brown"])], vec![inst(0, &["brown"])]]);
        let edited = VideoTwin::from_frames(vec![vec![inst(0, &["brown"])], vec![inst(0, &["golden"])]]);
        let diff = diff_twins(&original, &edited);
        assert_eq!(
            diff.changed,
            vec![FieldChange {
                frame_index: 1,
                id: 0,
                field: "attributes".into(),
                old: serde_json::json!(["brown"]),
                new: serde_json::json!(["golden"]),
            }]
        );
    }

    #[test]
    fn additions_and_spatial_moves() {
        let original = VideoTwin::from_frames(vec![vec![inst(0, &[])]]);
        let mut moved = inst(0, &[]);
        moved.spatial.x = 0.25;
        let edited = VideoTwin::from_frames(vec![vec![moved, inst(7, &["new"])]]);
        let diff = diff_twins(&original, &edited);
        assert_eq!(diff.changed.len(), 1);
        assert_eq!(diff.changed[0].field, "spatial.x");
        assert_eq!(diff.added.len(), 1);
        assert_eq!(diff.added[0].1.id, 7);
        assert_eq!(apply_diff(&original, &diff), edited);
        let touched: Vec<_> = diff.touched().into_iter().map(|k| k.id).collect();
        assert_eq!(touched, vec![0, 7]);
    }
}
