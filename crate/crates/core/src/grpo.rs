//! Group-relative policy optimization.
//!
//! The maths here is model-agnostic: advantages normalized within a rollout
//! group, the clipped surrogate with a KL penalty toward a frozen reference
//! policy, and its analytic gradient for a categorical policy. A toy
//! environment whose actions are complete rollouts exercises the whole
//! reward pipeline at desk scale.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::quantize;
use crate::reward::{score_rollout, JudgeVerdict, RewardBreakdown, RewardConfig};
use crate::rollout::{
    drive_loop, extract_edit, LoopConfig, Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse,
};
use crate::twin::{diff_twins, parse_twin, serialize_twin, MaskRef, ObjectInstance, SpatialProps, VideoTwin};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("rollout group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("reward {0} is not finite")]
    NonFiniteReward(f64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid toy environment: {0}")]
    InvalidEnv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_coefficient: f64,
    pub advantage_epsilon: f64,
    /// Recorded for reference; the toy trainer uses it as groups per iteration.
    pub batch_size: usize,
    /// Recorded for reference; the toy trainer has its own step size.
    pub learning_rate: f64,
    pub epochs: usize,
    pub lora_rank: usize,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_coefficient: 0.04,
            advantage_epsilon: 1e-8,
            batch_size: 8,
            learning_rate: 5e-7,
            epochs: 10,
            lora_rank: 8,
        }
    }
}

impl GrpoConfig {
    pub fn check(&self) -> Result<(), GrpoError> {
        if self.group_size < 2 {
            return Err(GrpoError::InvalidConfig("group_size must be at least 2".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(GrpoError::InvalidConfig("clip_epsilon must lie in (0, 1)".into()));
        }
        if self.kl_coefficient.is_nan() || self.kl_coefficient < 0.0 {
            return Err(GrpoError::InvalidConfig("kl_coefficient must be non-negative".into()));
        }
        if self.advantage_epsilon.is_nan() || self.advantage_epsilon <= 0.0 {
            return Err(GrpoError::InvalidConfig("advantage_epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Rewards of the rollouts sampled for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    rewards: Vec<f64>,
}

impl RolloutGroup {
    pub fn new(rewards: Vec<f64>) -> Result<Self, GrpoError> {
        if rewards.len() < 2 {
            return Err(GrpoError::GroupTooSmall(rewards.len()));
        }
        if let Some(&bad) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(GrpoError::NonFiniteReward(bad));
        }
        Ok(Self { rewards })
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn group_size(&self) -> usize {
        self.rewards.len()
    }
}

/// `(r_i - mean) / (std_pop + eps)`; an all-equal group gives all zeros.
pub fn group_advantages(group: &RolloutGroup, cfg: &GrpoConfig) -> Vec<f64> {
    let r = &group.rewards;
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + cfg.advantage_epsilon;
    r.iter().map(|v| (v - mean) / denom).collect()
}

/// Non-negative KL estimator `exp(d) - d - 1` with `d = logp_ref - logp_new`.
pub fn kl_estimate(logp_new: f64, logp_ref: f64) -> f64 {
    let d = logp_ref - logp_new;
    d.exp() - d - 1.0
}

pub fn grpo_objective(ratio: f64, advantage: f64, kl: f64, cfg: &GrpoConfig) -> f64 {
    let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
    (ratio * advantage).min(clipped * advantage) - cfg.kl_coefficient * kl
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Softmax policy over a fixed action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPolicy {
    pub logits: Vec<f64>,
}

impl CategoricalPolicy {
    pub fn uniform(n_actions: usize) -> Self {
        Self {
            logits: vec![0.0; n_actions],
        }
    }

    pub fn log_probs(&self) -> Vec<f64> {
        log_softmax(&self.logits)
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs().into_iter().map(f64::exp).collect()
    }

    pub fn entropy(&self) -> f64 {
        self.log_probs().iter().map(|lp| -lp.exp() * lp).sum()
    }

    /// Inverse-CDF draw from one uniform variate.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let probs = self.probs();
        let mut acc = 0.0;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        probs.len() - 1
    }

    pub fn expected(&self, values: &[f64]) -> f64 {
        self.probs().iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

/// One sampled action with its advantage and behaviour log-probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySample {
    pub action: usize,
    pub advantage: f64,
    pub logp_old: f64,
}

/// Mean clipped surrogate minus KL penalty over `samples`, as a function of
/// the policy logits.
pub fn surrogate(logits: &[f64], ref_logits: &[f64], samples: &[PolicySample], cfg: &GrpoConfig) -> f64 {
    let lp = log_softmax(logits);
    let lr = log_softmax(ref_logits);
    let total: f64 = samples
        .iter()
        .map(|s| {
            let ratio = (lp[s.action] - s.logp_old).exp();
            grpo_objective(ratio, s.advantage, kl_estimate(lp[s.action], lr[s.action]), cfg)
        })
        .sum();
    total / samples.len() as f64
}

/// Analytic gradient of [`surrogate`] with respect to the logits.
pub fn surrogate_gradient(logits: &[f64], ref_logits: &[f64], samples: &[PolicySample], cfg: &GrpoConfig) -> Vec<f64> {
    let lp = log_softmax(logits);
    let lr = log_softmax(ref_logits);
    let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
    let mut grad = vec![0.0; logits.len()];
    for s in samples {
        let a = s.action;
        let ratio = (lp[a] - s.logp_old).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        let surrogate_active = ratio * s.advantage <= clipped * s.advantage || ratio == clipped;
        let d_surrogate = if surrogate_active { s.advantage * ratio } else { 0.0 };
        let d_kl = 1.0 - (lr[a] - lp[a]).exp();
        let coeff = d_surrogate - cfg.kl_coefficient * d_kl;
        for (k, g) in grad.iter_mut().enumerate() {
            let onehot = if k == a { 1.0 } else { 0.0 };
            *g += coeff * (onehot - probs[k]);
        }
    }
    let n = samples.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    grad
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyStyle {
    /// Follows the protocol and produces a schema-valid edit.
    WellFormed,
    /// Stray prose, a failing query and a truncated edit.
    Malformed,
}

/// A candidate rollout: edit `object_id`, written in `style`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyAction {
    pub object_id: u64,
    pub style: ToyStyle,
}

/// Synthetic editing task. Its query names the target only implicitly
/// ("the leftmost object"), and each action is a scripted rollout that is
/// driven through the real loop and scored by the reward engine.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEnv {
    pub twin: VideoTwin,
    pub query: String,
    pub target_id: u64,
    pub actions: Vec<ToyAction>,
}

const TOY_CATEGORIES: [&str; 6] = ["dog", "cat", "car", "ball", "bird", "cup"];
pub const TOY_EDIT_ATTRIBUTE: &str = "golden";

struct ScriptedTurns(Vec<String>, std::sync::Mutex<usize>);

impl Reasoner for ScriptedTurns {
    fn complete(&self, _request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        let mut next = self.1.lock().expect("turn counter");
        let content = self.0.get(*next).cloned().unwrap_or_default();
        *next += 1;
        Ok(ReasonerResponse { content })
    }
}

impl ToyEnv {
    pub fn new(twin: VideoTwin, query: String, target_id: u64, actions: Vec<ToyAction>) -> Result<Self, GrpoError> {
        if actions.is_empty() {
            return Err(GrpoError::InvalidEnv("no actions".into()));
        }
        let ids: BTreeSet<u64> = twin
            .frames
            .iter()
            .flat_map(|f| f.instances.iter().map(|o| o.id))
            .collect();
        if !ids.contains(&target_id) {
            return Err(GrpoError::InvalidEnv(format!("target {target_id} not in twin")));
        }
        if let Some(a) = actions.iter().find(|a| !ids.contains(&a.object_id)) {
            return Err(GrpoError::InvalidEnv(format!(
                "action object {} not in twin",
                a.object_id
            )));
        }
        Ok(Self {
            twin,
            query,
            target_id,
            actions,
        })
    }

    /// A two-frame twin with `n_actions` objects and one action per object.
    /// The target is the leftmost object; when `malformed_distractors` is set,
    /// every non-target action is a malformed rollout.
    pub fn generate<R: Rng>(rng: &mut R, n_actions: usize, malformed_distractors: bool) -> Self {
        assert!(
            (1..=TOY_CATEGORIES.len()).contains(&n_actions),
            "1 to 6 actions supported"
        );
        let mut xs: Vec<f64> = Vec::new();
        while xs.len() < n_actions {
            let x = quantize(rng.random_range(0.05..0.95));
            if !xs.contains(&x) {
                xs.push(x);
            }
        }
        let frame = |shift: f64, rng: &mut R| -> Vec<ObjectInstance> {
            (0..n_actions)
                .map(|k| ObjectInstance {
                    id: k as u64,
                    category: TOY_CATEGORIES[k].to_string(),
                    attributes: vec!["plain".to_string()],
                    mask_ref: MaskRef::Path(format!("masks/{k}.rle")),
                    spatial: SpatialProps {
                        x: quantize((xs[k] + shift).min(1.0)),
                        y: quantize(rng.random_range(0.1..0.9)),
                        depth: quantize(rng.random_range(0.0..1.0)),
                        size: quantize(rng.random_range(0.01..0.2)),
                    },
                })
                .collect()
        };
        let f0 = frame(0.0, rng);
        let f1 = frame(0.01, rng);
        let twin = VideoTwin::from_frames(vec![f0, f1]);
        let target_id = (0..n_actions)
            .min_by(|&a, &b| xs[a].total_cmp(&xs[b]))
            .expect("non-empty") as u64;
        let actions = (0..n_actions as u64)
            .map(|id| ToyAction {
                object_id: id,
                style: if id != target_id && malformed_distractors {
                    ToyStyle::Malformed
                } else {
                    ToyStyle::WellFormed
                },
            })
            .collect();
        Self {
            twin,
            query: format!("Make the leftmost object {TOY_EDIT_ATTRIBUTE}."),
            target_id,
            actions,
        }
    }

    /// The four-action task: one correct well-formed rollout, three malformed ones.
    pub fn four_action(seed: u64) -> Self {
        Self::generate(&mut ChaCha8Rng::seed_from_u64(seed), 4, true)
    }

    fn edited_twin(&self, id: u64) -> VideoTwin {
        let mut edited = self.twin.clone();
        for frame in &mut edited.frames {
            for inst in frame.instances.iter_mut().filter(|o| o.id == id) {
                inst.attributes = vec![TOY_EDIT_ATTRIBUTE.to_string()];
            }
        }
        edited
    }

    /// Reasoner turns realizing an action.
    pub fn turns(&self, action: &ToyAction) -> Vec<String> {
        let id = action.object_id;
        match action.style {
            ToyStyle::WellFormed => vec![
                format!("<think>The query refers to the leftmost object. I will edit object {id}.</think><execute>id(leftmost(objects(frame=0)))</execute>"),
                format!("<edit>{}</edit>", serialize_twin(&self.edited_twin(id))),
            ],
            ToyStyle::Malformed => vec![
                format!("<think>Edit object {id}.</think>Looking it up.<execute>objects(frame=99)</execute>"),
                format!("<edit>{{\"frame_count\":{},\"frames\":[", self.twin.frame_count),
            ],
        }
    }

    /// Correct iff the edit parses and touches exactly the target object.
    pub fn judge(&self, edit_text: &str) -> JudgeVerdict {
        let Ok(edited) = parse_twin(edit_text) else {
            return JudgeVerdict {
                correct: false,
                rationale: "edit does not parse".into(),
            };
        };
        let touched: BTreeSet<u64> = diff_twins(&self.twin, &edited)
            .touched()
            .into_iter()
            .map(|k| k.id)
            .collect();
        let correct = touched.len() == 1 && touched.contains(&self.target_id);
        JudgeVerdict {
            correct,
            rationale: format!("edited objects {touched:?}"),
        }
    }

    /// Drives the action's rollout through the loop and scores it.
    pub fn score(&self, action: usize, reward_cfg: &RewardConfig) -> RewardBreakdown {
        let reasoner = ScriptedTurns(self.turns(&self.actions[action]), std::sync::Mutex::new(0));
        let (transcript, outcomes) = match drive_loop(&reasoner, &self.twin, &self.query, &LoopConfig::default()) {
            Ok(done) => done,
            Err(crate::rollout::RolloutError::RoundLimitExceeded {
                transcript, outcomes, ..
            }) => (*transcript, outcomes),
            Err(e) => panic!("scripted toy rollout cannot fail: {e}"),
        };
        let verdict = extract_edit(&transcript).ok().map(|e| self.judge(e));
        score_rollout(&transcript, &outcomes, &self.twin, verdict.as_ref(), reward_cfg).0
    }

    pub fn action_rewards(&self, reward_cfg: &RewardConfig) -> Vec<f64> {
        (0..self.actions.len())
            .map(|a| self.score(a, reward_cfg).total)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyTrainConfig {
    pub iterations: usize,
    /// Step size of the logit ascent.
    pub step_size: f64,
    pub grpo: GrpoConfig,
    pub reward: RewardConfig,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step_size: 0.5,
            grpo: GrpoConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: usize,
    pub mean_reward: f64,
    pub mean_advantage_abs: f64,
    pub kl_mean: f64,
    pub policy_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTrainOutput {
    pub policy: CategoricalPolicy,
    /// Mean sampled reward per iteration.
    pub curve: Vec<f64>,
    pub log: Vec<TrainRecord>,
    pub action_rewards: Vec<f64>,
}

impl ToyTrainOutput {
    /// Expected reward of the final policy.
    pub fn expected_reward(&self) -> f64 {
        self.policy.expected(&self.action_rewards)
    }
}

/// Trains a categorical policy over `env`'s actions from uniform logits.
/// Each iteration samples `batch_size` groups of `group_size` actions, takes
/// group-normalized advantages and ascends the surrogate once.
pub fn train_toy_policy(env: &ToyEnv, cfg: &ToyTrainConfig, seed: u64) -> Result<ToyTrainOutput, GrpoError> {
    cfg.grpo.check()?;
    if cfg.grpo.batch_size == 0 {
        return Err(GrpoError::InvalidConfig("batch_size must be positive".into()));
    }
    let action_rewards = env.action_rewards(&cfg.reward);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = CategoricalPolicy::uniform(env.actions.len());
    let reference = policy.clone();
    let ref_lp = reference.log_probs();
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut log = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let lp = policy.log_probs();
        let mut samples = Vec::with_capacity(cfg.grpo.batch_size * cfg.grpo.group_size);
        let mut reward_sum = 0.0;
        for _ in 0..cfg.grpo.batch_size {
            let actions: Vec<usize> = (0..cfg.grpo.group_size).map(|_| policy.sample(&mut rng)).collect();
            let rewards: Vec<f64> = actions.iter().map(|&a| action_rewards[a]).collect();
            reward_sum += rewards.iter().sum::<f64>();
            let group = RolloutGroup::new(rewards)?;
            for (a, adv) in actions.into_iter().zip(group_advantages(&group, &cfg.grpo)) {
                samples.push(PolicySample {
                    action: a,
                    advantage: adv,
                    logp_old: lp[a],
                });
            }
        }
        let n = samples.len() as f64;
        let record = TrainRecord {
            iteration,
            mean_reward: reward_sum / n,
            mean_advantage_abs: samples.iter().map(|s| s.advantage.abs()).sum::<f64>() / n,
            kl_mean: samples
                .iter()
                .map(|s| kl_estimate(lp[s.action], ref_lp[s.action]))
                .sum::<f64>()
                / n,
            policy_entropy: policy.entropy(),
        };
        let grad = surrogate_gradient(&policy.logits, &reference.logits, &samples, &cfg.grpo);
        for (l, g) in policy.logits.iter_mut().zip(&grad) {
            *l += cfg.step_size * g;
        }
        curve.push(record.mean_reward);
        log.push(record);
    }
    Ok(ToyTrainOutput {
        policy,
        curve,
        log,
        action_rewards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantage_examples() {
        let cfg = GrpoConfig::default();
        let adv = |r: Vec<f64>| group_advantages(&RolloutGroup::new(r).unwrap(), &cfg);
        assert_eq!(adv(vec![1.0; 4]), vec![0.0; 4]);
        let a = adv(vec![2.0, 0.0, -2.0]);
        assert!((a[0] - 1.224745).abs() < 1e-6 && a[1] == 0.0 && (a[2] + 1.224745).abs() < 1e-6);
        let a = adv(vec![1.5, -3.0]);
        assert!((a[0] - 1.0).abs() < 1e-8 && (a[1] + 1.0).abs() < 1e-8);
        assert_eq!(RolloutGroup::new(vec![1.0]), Err(GrpoError::GroupTooSmall(1)));
    }

    #[test]
    fn kl_and_objective_examples() {
        let cfg = GrpoConfig::default();
        assert_eq!(kl_estimate(-1.0, -1.0), 0.0);
        assert!((kl_estimate(0.0, 1.0) - (std::f64::consts::E - 2.0)).abs() < 1e-12);
        assert!((kl_estimate(1.0, 0.0) - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(grpo_objective(1.0, 1.0, 0.0, &cfg), 1.0);
        assert!((grpo_objective(2.0, 1.0, 0.0, &cfg) - 1.2).abs() < 1e-12);
        assert!((grpo_objective(0.5, -1.0, 0.0, &cfg) + 0.8).abs() < 1e-12);
    }

    #[test]
    fn four_action_rewards() {
        let env = ToyEnv::four_action(3);
        let rewards = env.action_rewards(&RewardConfig::default());
        for (a, r) in env.actions.iter().zip(&rewards) {
            let expected = if a.object_id == env.target_id { 1.5 } else { -3.0 };
            assert_eq!(*r, expected, "{a:?}");
        }
    }

    #[test]
    fn wrong_object_well_formed_is_judged_incorrect() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let env = ToyEnv::generate(&mut rng, 3, false);
        let rewards = env.action_rewards(&RewardConfig::default());
        for (a, r) in env.actions.iter().zip(&rewards) {
            let expected = if a.object_id == env.target_id { 1.5 } else { -0.5 };
            assert_eq!(*r, expected);
        }
    }

    #[test]
    fn sampling_follows_probabilities() {
        let policy = CategoricalPolicy {
            logits: vec![0.0, (3.0f64).ln()],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hits = (0..20_000).filter(|_| policy.sample(&mut rng) == 1).count();
        assert!((hits as f64 / 20_000.0 - 0.75).abs() < 0.02);
    }

    #[test]
    fn single_action_curve_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let env = ToyEnv::generate(&mut rng, 1, true);
        let cfg = ToyTrainConfig {
            iterations: 5,
            ..ToyTrainConfig::default()
        };
        let out = train_toy_policy(&env, &cfg, 0).unwrap();
        assert!(out.curve.iter().all(|&r| r == 1.5));
    }
}
