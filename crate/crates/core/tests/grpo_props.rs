use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use river_core::grpo::{
    group_advantages, grpo_objective, kl_estimate, surrogate, surrogate_gradient, train_toy_policy, CategoricalPolicy,
    GrpoConfig, PolicySample, RolloutGroup, ToyEnv, ToyTrainConfig,
};

fn advantages(rewards: &[f64]) -> Vec<f64> {
    group_advantages(&RolloutGroup::new(rewards.to_vec()).unwrap(), &GrpoConfig::default())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

fn rewards_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..1.5, 2..32)
}

proptest! {
    #[test]
    fn advantages_are_standardized(rewards in rewards_strategy()) {
        let (_, spread) = mean_std(&rewards);
        let (m, s) = mean_std(&advantages(&rewards));
        prop_assert!(m.abs() <= 1e-9, "mean {m}");
        if spread > 1e-3 {
            prop_assert!((s - 1.0).abs() <= 1e-6, "std {s}");
        }
    }

    #[test]
    fn advantages_shift_invariant(rewards in rewards_strategy(), shift in -10.0f64..10.0) {
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        for (a, b) in advantages(&rewards).iter().zip(advantages(&shifted)) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn advantages_scale_invariant(rewards in rewards_strategy(), scale in 0.5f64..4.0) {
        let (_, spread) = mean_std(&rewards);
        prop_assume!(spread > 1e-3);
        let scaled: Vec<f64> = rewards.iter().map(|r| r * scale).collect();
        for (a, b) in advantages(&rewards).iter().zip(advantages(&scaled)) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn kl_is_non_negative(a in -20.0f64..0.0, b in -20.0f64..0.0) {
        prop_assert!(kl_estimate(a, b) >= 0.0);
    }

    #[test]
    fn objective_without_kl_is_clipped_surrogate(ratio in 0.0f64..3.0, adv in -3.0f64..3.0) {
        let cfg = GrpoConfig::default();
        let oracle = if adv >= 0.0 { ratio.min(1.2) * adv } else { ratio.max(0.8) * adv };
        prop_assert!((grpo_objective(ratio, adv, 0.0, &cfg) - oracle).abs() < 1e-12);
        prop_assert!((grpo_objective(ratio, adv, 1.0, &cfg) - (oracle - cfg.kl_coefficient)).abs() < 1e-12);
    }
}

#[test]
fn kl_closed_forms() {
    assert!(kl_estimate(-0.7, -0.7).abs() <= 1e-9);
    assert!((kl_estimate(0.0, 1.0) - (std::f64::consts::E - 2.0)).abs() <= 1e-9);
    assert!((kl_estimate(1.0, 0.0) - (-1.0f64).exp()).abs() <= 1e-9);
}

fn random_state(rng: &mut ChaCha8Rng, cfg: &GrpoConfig) -> Option<(Vec<f64>, Vec<f64>, Vec<PolicySample>)> {
    let n = rng.random_range(2..7);
    let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let ref_logits: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let lp = CategoricalPolicy { logits: logits.clone() }.log_probs();
    let samples: Vec<PolicySample> = (0..rng.random_range(1..12))
        .map(|_| {
            let action = rng.random_range(0..n);
            PolicySample {
                action,
                advantage: rng.random_range(-2.0..2.0),
                logp_old: lp[action] + rng.random_range(-0.4..0.4),
            }
        })
        .collect();
    let near_kink = samples.iter().any(|s| {
        let ratio = (lp[s.action] - s.logp_old).exp();
        (ratio - (1.0 - cfg.clip_epsilon)).abs() < 1e-3 || (ratio - (1.0 + cfg.clip_epsilon)).abs() < 1e-3
    });
    (!near_kink).then_some((logits, ref_logits, samples))
}

#[test]
fn gradient_matches_central_differences() {
    let cfg = GrpoConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h = 1e-5;
    let mut checked = 0;
    while checked < 500 {
        let Some((logits, ref_logits, samples)) = random_state(&mut rng, &cfg) else {
            continue;
        };
        let analytic = surrogate_gradient(&logits, &ref_logits, &samples, &cfg);
        let numeric: Vec<f64> = (0..logits.len())
            .map(|k| {
                let mut up = logits.clone();
                let mut down = logits.clone();
                up[k] += h;
                down[k] -= h;
                (surrogate(&up, &ref_logits, &samples, &cfg) - surrogate(&down, &ref_logits, &samples, &cfg))
                    / (2.0 * h)
            })
            .collect();
        let err: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-6);
        assert!(err / norm <= 1e-5, "relative error {} at {logits:?}", err / norm);
        checked += 1;
    }
}

#[test]
fn toy_training_reaches_threshold() {
    let env = ToyEnv::four_action(0);
    let cfg = ToyTrainConfig::default();
    let out = train_toy_policy(&env, &cfg, 17).unwrap();
    assert_eq!(out.curve.len(), 500);
    assert!(out.curve.iter().any(|&r| r >= 1.2));
    assert!(out.expected_reward() >= 1.2, "{}", out.expected_reward());
    let entropy_start = out.log[0].policy_entropy;
    let entropy_end = out.log.last().unwrap().policy_entropy;
    assert!(entropy_end < entropy_start);
}

#[test]
fn toy_training_is_bit_reproducible() {
    let env = ToyEnv::four_action(4);
    let cfg = ToyTrainConfig {
        iterations: 120,
        ..ToyTrainConfig::default()
    };
    let a = train_toy_policy(&env, &cfg, 99).unwrap();
    let b = train_toy_policy(&env, &cfg, 99).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.curve), bits(&b.curve));
    assert_eq!(bits(&a.policy.logits), bits(&b.policy.logits));
    let c = train_toy_policy(&env, &cfg, 100).unwrap();
    assert_ne!(bits(&a.curve), bits(&c.curve));
}
