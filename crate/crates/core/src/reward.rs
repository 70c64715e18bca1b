//! Reward decomposition for a rollout: `R = α·(R_token + R_exec + R_dt) + β·R_perf`.

use serde::{Deserialize, Serialize};

use crate::rollout::{extract_edit, validate_sequence, ExecOutcome, RolloutTranscript};
use crate::twin::{validate_against_schema, ValidationReport, VideoTwin};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardValues {
    pub token_ok: f64,
    pub token_bad: f64,
    pub exec_ok: f64,
    pub exec_bad: f64,
    pub dt_ok: f64,
    pub dt_bad: f64,
    pub perf_ok: f64,
    pub perf_bad: f64,
}

impl Default for RewardValues {
    fn default() -> Self {
        Self {
            token_ok: 0.0,
            token_bad: -1.0,
            exec_ok: 0.0,
            exec_bad: -0.5,
            dt_ok: 0.5,
            dt_bad: -0.5,
            perf_ok: 1.0,
            perf_bad: -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub alpha: f64,
    pub beta: f64,
    pub values: RewardValues,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            values: RewardValues::default(),
        }
    }
}

impl RewardConfig {
    /// Logs a warning for every constant that differs from the default and
    /// returns how many did.
    pub fn warn_overrides(&self) -> usize {
        let d = RewardConfig::default();
        let v = &self.values;
        let dv = &d.values;
        let fields = [
            ("alpha", self.alpha, d.alpha),
            ("beta", self.beta, d.beta),
            ("values.token_ok", v.token_ok, dv.token_ok),
            ("values.token_bad", v.token_bad, dv.token_bad),
            ("values.exec_ok", v.exec_ok, dv.exec_ok),
            ("values.exec_bad", v.exec_bad, dv.exec_bad),
            ("values.dt_ok", v.dt_ok, dv.dt_ok),
            ("values.dt_bad", v.dt_bad, dv.dt_bad),
            ("values.perf_ok", v.perf_ok, dv.perf_ok),
            ("values.perf_bad", v.perf_bad, dv.perf_bad),
        ];
        let mut n = 0;
        for (name, value, default) in fields {
            if value != default {
                log::warn!("reward constant {name} overridden: {value} (default {default})");
                n += 1;
            }
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub correct: bool,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub r_token: f64,
    pub r_exec: f64,
    pub r_dt: f64,
    pub r_perf: f64,
}

/// Why each component took its value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub token: String,
    pub exec: String,
    pub dt: String,
    pub perf: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_token: f64,
    pub r_exec: f64,
    pub r_dt: f64,
    pub r_struct: f64,
    pub r_perf: f64,
    pub total: f64,
    pub alpha: f64,
    pub beta: f64,
    pub provenance: Provenance,
}

pub fn token_reward(transcript: &RolloutTranscript, cfg: &RewardConfig) -> f64 {
    if validate_sequence(transcript) {
        cfg.values.token_ok
    } else {
        cfg.values.token_bad
    }
}

/// Any failed block costs the single exec penalty.
pub fn exec_reward(outcomes: &[ExecOutcome], cfg: &RewardConfig) -> f64 {
    if outcomes.iter().all(ExecOutcome::is_ok) {
        cfg.values.exec_ok
    } else {
        cfg.values.exec_bad
    }
}

pub fn dt_reward(edit_text: &str, reference: &VideoTwin, cfg: &RewardConfig) -> (f64, ValidationReport) {
    let report = validate_against_schema(edit_text, reference);
    let r = if report.valid {
        cfg.values.dt_ok
    } else {
        cfg.values.dt_bad
    };
    (r, report)
}

pub fn perf_reward(verdict: &JudgeVerdict, cfg: &RewardConfig) -> f64 {
    if verdict.correct {
        cfg.values.perf_ok
    } else {
        cfg.values.perf_bad
    }
}

pub fn total_reward(c: RewardComponents, cfg: &RewardConfig) -> RewardBreakdown {
    let r_struct = c.r_token + c.r_exec + c.r_dt;
    RewardBreakdown {
        r_token: c.r_token,
        r_exec: c.r_exec,
        r_dt: c.r_dt,
        r_struct,
        r_perf: c.r_perf,
        total: cfg.alpha * r_struct + cfg.beta * c.r_perf,
        alpha: cfg.alpha,
        beta: cfg.beta,
        provenance: Provenance::default(),
    }
}

/// Scores a finished rollout end to end.
///
/// Without an Edit block the dt check runs on an empty candidate and the
/// performance reward is the penalty, as there is nothing to judge. The same
/// penalty applies to a schema-invalid edit. A valid edit with no verdict
/// scores `r_perf = 0`, marked "unjudged".
pub fn score_rollout(
    transcript: &RolloutTranscript,
    outcomes: &[ExecOutcome],
    reference: &VideoTwin,
    verdict: Option<&JudgeVerdict>,
    cfg: &RewardConfig,
) -> (RewardBreakdown, ValidationReport) {
    let r_token = token_reward(transcript, cfg);
    let r_exec = exec_reward(outcomes, cfg);
    let edit = extract_edit(transcript).ok();
    let (r_dt, report) = dt_reward(edit.unwrap_or(""), reference, cfg);

    let (r_perf, perf_reason) = match (edit, report.valid, verdict) {
        (None, _, _) => (cfg.values.perf_bad, "no edit segment".to_string()),
        (Some(_), false, _) => (cfg.values.perf_bad, "invalid edit, no video to judge".to_string()),
        (Some(_), true, None) => (0.0, "unjudged".to_string()),
        (Some(_), true, Some(v)) => (
            perf_reward(v, cfg),
            if v.correct {
                "judge: correct"
            } else {
                "judge: incorrect"
            }
            .to_string(),
        ),
    };

    let mut breakdown = total_reward(
        RewardComponents {
            r_token,
            r_exec,
            r_dt,
            r_perf,
        },
        cfg,
    );
    let failed = outcomes.iter().filter(|o| !o.is_ok()).count();
    breakdown.provenance = Provenance {
        token: if validate_sequence(transcript) {
            "sequence valid".to_string()
        } else if let Some(issue) = transcript.issues.first() {
            format!("invalid sequence: {issue}")
        } else {
            format!("invalid sequence: kinds {:?}", transcript.kinds())
        },
        exec: format!("{} of {} blocks failed", failed, outcomes.len()),
        dt: match report.violations.first() {
            None => "schema valid".to_string(),
            Some(v) => format!("{} at {}: {}", v.kind, v.path, v.message),
        },
        perf: perf_reason,
    };
    (breakdown, report)
}
