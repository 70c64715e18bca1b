use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use river_core::reward::{dt_reward, total_reward, RewardComponents, RewardConfig};
use river_core::twin::serialize_twin;
use river_testkit::twin_gen::{random_twin, TwinShape};

/// Expected totals for every (token ok, exec ok, dt ok, perf ok) combination,
/// written out from the constants table.
const GOLDEN: [(bool, bool, bool, bool, f64); 16] = [
    (true, true, true, true, 1.5),
    (true, true, true, false, -0.5),
    (true, true, false, true, 0.5),
    (true, true, false, false, -1.5),
    (true, false, true, true, 1.0),
    (true, false, true, false, -1.0),
    (true, false, false, true, 0.0),
    (true, false, false, false, -2.0),
    (false, true, true, true, 0.5),
    (false, true, true, false, -1.5),
    (false, true, false, true, -0.5),
    (false, true, false, false, -2.5),
    (false, false, true, true, 0.0),
    (false, false, true, false, -2.0),
    (false, false, false, true, -1.0),
    (false, false, false, false, -3.0),
];

#[test]
fn sixteen_combinations() {
    let cfg = RewardConfig::default();
    let v = cfg.values;
    for (tok, exec, dt, perf, want) in GOLDEN {
        let c = RewardComponents {
            r_token: if tok { v.token_ok } else { v.token_bad },
            r_exec: if exec { v.exec_ok } else { v.exec_bad },
            r_dt: if dt { v.dt_ok } else { v.dt_bad },
            r_perf: if perf { v.perf_ok } else { v.perf_bad },
        };
        let b = total_reward(c, &cfg);
        assert_eq!(b.total, want, "{tok} {exec} {dt} {perf}");
        assert_eq!(b.r_struct, c.r_token + c.r_exec + c.r_dt);
        assert!((-3.0..=1.5).contains(&b.total));
    }
}

proptest! {
    #[test]
    fn total_is_linear(
        t in -2.0f64..2.0, e in -2.0f64..2.0, d in -2.0f64..2.0, p in -2.0f64..2.0,
        t2 in -2.0f64..2.0, e2 in -2.0f64..2.0, d2 in -2.0f64..2.0, p2 in -2.0f64..2.0,
        alpha in 0.0f64..3.0, beta in 0.0f64..3.0,
    ) {
        let cfg = RewardConfig { alpha, beta, ..RewardConfig::default() };
        let c1 = RewardComponents { r_token: t, r_exec: e, r_dt: d, r_perf: p };
        let c2 = RewardComponents { r_token: t2, r_exec: e2, r_dt: d2, r_perf: p2 };
        let sum = RewardComponents { r_token: t + t2, r_exec: e + e2, r_dt: d + d2, r_perf: p + p2 };
        let lhs = total_reward(sum, &cfg).total;
        let rhs = total_reward(c1, &cfg).total + total_reward(c2, &cfg).total;
        prop_assert!((lhs - rhs).abs() < 1e-9);
        let b = total_reward(c1, &cfg);
        prop_assert!((b.total - (alpha * b.r_struct + beta * b.r_perf)).abs() < 1e-12);
    }

    #[test]
    fn dt_invariant_under_reserialization(seed in any::<u64>()) {
        let cfg = RewardConfig::default();
        let twin = random_twin(&mut ChaCha8Rng::seed_from_u64(seed), &TwinShape::default());
        let canonical = serialize_twin(&twin);
        let pretty = serde_json::to_string_pretty(&serde_json::from_str::<serde_json::Value>(&canonical).unwrap()).unwrap();
        prop_assert_eq!(dt_reward(&canonical, &twin, &cfg).0, 0.5);
        prop_assert_eq!(dt_reward(&pretty, &twin, &cfg).0, 0.5);
    }
}
