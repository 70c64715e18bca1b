use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use river_core::twin::{
    apply_diff, diff_twins, parse_twin, resolve_path, serialize_twin, validate_against_schema, ViolationKind,
};
use river_testkit::twin_gen::{mutate_twin, random_twin, TwinShape};
use serde_json::Value;

fn twin_from(seed: u64) -> river_core::twin::VideoTwin {
    random_twin(&mut ChaCha8Rng::seed_from_u64(seed), &TwinShape::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parse_serialize_round_trip(seed in any::<u64>()) {
        let twin = twin_from(seed);
        let text = serialize_twin(&twin);
        let parsed = parse_twin(&text).unwrap();
        prop_assert_eq!(&parsed, &twin);
        prop_assert_eq!(serialize_twin(&parsed), text);
    }

    #[test]
    fn own_serialization_is_schema_valid(seed in any::<u64>()) {
        let twin = twin_from(seed);
        let report = validate_against_schema(&serialize_twin(&twin), &twin);
        prop_assert!(report.valid, "{:?}", report.violations);
    }

    #[test]
    fn diff_then_apply_reconstructs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_twin(&mut rng, &TwinShape::default());
        let b = mutate_twin(&mut rng, &a, &TwinShape::default());
        let d = diff_twins(&a, &b);
        prop_assert_eq!(apply_diff(&a, &d), b);
        prop_assert!(diff_twins(&a, &a).is_empty());
    }

    #[test]
    fn diff_keys_are_disjoint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_twin(&mut rng, &TwinShape::default());
        let b = mutate_twin(&mut rng, &a, &TwinShape::default());
        let d = diff_twins(&a, &b);
        let changed: std::collections::BTreeSet<_> = d.changed.iter().map(|c| (c.frame_index, c.id)).collect();
        for r in &d.removed {
            prop_assert!(!changed.contains(&(r.frame_index, r.id)));
        }
        for (t, inst) in &d.added {
            prop_assert!(!changed.contains(&(*t, inst.id)));
            prop_assert!(!d.removed.iter().any(|r| r.frame_index == *t && r.id == inst.id));
        }
    }

    /// Dropping or retyping one field yields a violation whose path resolves
    /// in the original document.
    #[test]
    fn violation_paths_resolve(seed in any::<u64>(), pick in any::<usize>(), retype in any::<bool>()) {
        let twin = twin_from(seed);
        let mut doc: Value = serde_json::from_str(&serialize_twin(&twin)).unwrap();
        let mut paths = Vec::new();
        for (t, frame) in twin.frames.iter().enumerate() {
            for k in 0..frame.instances.len() {
                for field in ["id", "category", "attributes", "mask_ref", "spatial"] {
                    paths.push((format!("frames[{t}].instances[{k}]"), field.to_string()));
                }
                for field in ["x", "y", "depth", "size"] {
                    paths.push((format!("frames[{t}].instances[{k}].spatial"), field.to_string()));
                }
            }
        }
        prop_assume!(!paths.is_empty());
        let (parent, field) = &paths[pick % paths.len()];
        let original = doc.clone();
        let mut obj = &mut doc;
        for part in parent.split('.') {
            obj = match part.split_once('[') {
                Some((name, idx)) => &mut obj[name][idx.trim_end_matches(']').parse::<usize>().unwrap()],
                None => &mut obj[part],
            };
        }
        let map = obj.as_object_mut().unwrap();
        if retype {
            map.insert(field.clone(), Value::Bool(true));
        } else {
            map.remove(field);
        }
        let report = validate_against_schema(&doc.to_string(), &twin);
        prop_assert!(!report.valid);
        let kind = if retype { ViolationKind::TypeMismatch } else { ViolationKind::MissingField };
        prop_assert!(report.has_kind(kind), "{:?}", report.violations);
        for v in &report.violations {
            prop_assert!(resolve_path(&original, &v.path).is_some() || resolve_path(&doc, &v.path).is_some(), "{}", v.path);
        }
    }
}

#[test]
fn five_hundred_round_trips() {
    for seed in 0..500 {
        let twin = twin_from(seed);
        let text = serialize_twin(&twin);
        assert_eq!(serialize_twin(&parse_twin(&text).unwrap()), text, "seed {seed}");
    }
}
