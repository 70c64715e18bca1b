use std::collections::BTreeSet;

use super::{ObjectKey, TwinDiff, VideoTwin};

fn describe(frame_index: usize, id: u64, category: &str, attributes: &[String]) -> String {
    if attributes.is_empty() {
        format!("In frame {frame_index}, object {id} with category {category} has no attributes.")
    } else {
        format!(
            "In frame {frame_index}, object {id} with category {category} has attributes {}.",
            attributes.join(", ")
        )
    }
}

/// One templated line per changed or added object of `edited`, ordered by
/// (frame, id). Removed objects are not present in `edited`; see
/// [`removal_description`].
pub fn to_text_descriptions(edited: &VideoTwin, diff: &TwinDiff) -> Vec<String> {
    let keys: BTreeSet<ObjectKey> = diff
        .changed
        .iter()
        .map(|c| ObjectKey {
            frame_index: c.frame_index,
            id: c.id,
        })
        .chain(diff.added.iter().map(|(t, o)| ObjectKey {
            frame_index: *t,
            id: o.id,
        }))
        .collect();
    keys.into_iter()
        .filter_map(|key| {
            edited
                .instance(key.frame_index, key.id)
                .map(|o| describe(key.frame_index, o.id, &o.category, &o.attributes))
        })
        .collect()
}

pub fn removal_description(frame_index: usize, id: u64, category: &str) -> String {
    format!("In frame {frame_index}, object {id} with category {category} is removed.")
}
