use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use river_core::twin::VideoTwin;
use river_core::twinql::{evaluate, parse_program, run, EvalError, EvalLimits, TwinqlError, Value};
use river_testkit::twin_gen::{random_twin, TwinShape};
use river_testkit::twinql_oracle::{generate_case, values_match, Expected};

fn error_class(e: &EvalError) -> &'static str {
    match e {
        EvalError::FrameOutOfRange { .. } => "frame_out_of_range",
        EvalError::MissingObject { .. } => "missing_object",
        EvalError::TypeError { .. } => "type_error",
        _ => "other",
    }
}

fn check_cases(seed: u64, shape: TwinShape, n_twins: usize, per_twin: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for _ in 0..n_twins {
        let twin = random_twin(&mut rng, &shape);
        for _ in 0..per_twin {
            let case = generate_case(&mut rng, &twin);
            let got = run(&case.program, &twin, &EvalLimits::default());
            match (&case.expected, &got) {
                (Expected::Value(want), Ok(v)) => {
                    assert!(
                        values_match(want, v, 1e-9),
                        "{}: want {want:?}, got {v:?}",
                        case.program
                    )
                }
                (Expected::Error(kind), Err(TwinqlError::Eval(e))) => {
                    assert_eq!(*kind, error_class(e), "{}: {e}", case.program)
                }
                _ => panic!("{}: want {:?}, got {got:?}", case.program, case.expected),
            }
            checked += 1;
        }
    }
    checked
}

#[test]
fn thousand_programs_match_brute_force() {
    assert_eq!(check_cases(11, TwinShape::default(), 100, 10), 1000);
}

#[test]
fn tie_heavy_twins_match_brute_force() {
    let shape = TwinShape {
        tie_prone: true,
        ..TwinShape::default()
    };
    check_cases(12, shape, 100, 10);
}

fn tie_twin(seed: u64) -> VideoTwin {
    let shape = TwinShape {
        max_frames: 1,
        max_objects: 6,
        tie_prone: true,
    };
    random_twin(&mut ChaCha8Rng::seed_from_u64(seed), &shape)
}

proptest! {
    #[test]
    fn extreme_ties_pick_smallest_id(seed in any::<u64>()) {
        let twin = tie_twin(seed);
        let objs = &twin.frames[0].instances;
        prop_assume!(!objs.is_empty());
        for (builtin, key, max) in [("leftmost", "x", false), ("rightmost", "x", true), ("nearest", "depth", false), ("farthest", "depth", true)] {
            let value = |o: &river_core::twin::ObjectInstance| if key == "x" { o.spatial.x } else { o.spatial.depth };
            let best = objs.iter().map(value).fold(if max { f64::MIN } else { f64::MAX }, |a, b| if max { a.max(b) } else { a.min(b) });
            let want = objs.iter().filter(|o| value(o) == best).map(|o| o.id).min().unwrap();
            let got = run(&format!("{builtin}(objects(frame=0))"), &twin, &EvalLimits::default()).unwrap();
            prop_assert_eq!(got, Value::ObjRef { frame: 0, id: want });
        }
    }

    /// Nested comprehensions of growing size stop with a budget error rather
    /// than running past the budget.
    #[test]
    fn evaluation_halts_within_budget(budget in 1u64..2_000, nest in 1usize..4) {
        let twin = tie_twin(1);
        let mut program = "objects()".to_string();
        for k in 0..nest {
            program = format!("[[o{k} for o{k} in {program}] for f{k} in frames() + frames() + frames()]");
        }
        let ast = parse_program(&program).unwrap();
        let limits = EvalLimits { step_budget: budget, list_cap: 10_000 };
        match evaluate(&ast, &twin, &limits) {
            Ok(_) => {}
            Err(e) => prop_assert!(matches!(e, EvalError::BudgetExceeded { .. }), "{e}"),
        }
    }

    #[test]
    fn evaluation_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let twin = random_twin(&mut rng, &TwinShape::default());
        let case = generate_case(&mut rng, &twin);
        let a = run(&case.program, &twin, &EvalLimits::default());
        let b = run(&case.program, &twin, &EvalLimits::default());
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
