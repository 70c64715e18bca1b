//! Pipeline configuration file.
//!
//! ```toml
//! seed = 7
//! parallelism = 4
//!
//! [resolution]
//! width = 832
//! height = 480
//!
//! [rollout]
//! max_exec_rounds = 4
//!
//! [metrics]
//! metrics = ["ssim", "psnr", "judge"]
//! frame_stride = 2
//!
//! [endpoints.reasoner]
//! url = "http://localhost:8000/v1/reason"
//! timeout_secs = 120
//! retries = 2
//! ```
//!
//! Endpoint URLs may also come from `RIVER_<SERVICE>_URL` environment
//! variables, which win over the file.

use std::fs;
use std::path::{Path, PathBuf};

use river_core::grpo::GrpoConfig;
use river_core::metrics::{GROUNDING_THRESHOLD, METRICS};
use river_core::reward::RewardConfig;
use river_core::rollout::LoopConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Extra attempts after a connection failure or a 5xx response.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

impl Endpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelEndpoints {
    pub reasoner: Option<Endpoint>,
    pub perception: Option<Endpoint>,
    pub editor: Option<Endpoint>,
    pub embedding: Option<Endpoint>,
    pub detection: Option<Endpoint>,
    pub judge: Option<Endpoint>,
    pub quality: Option<Endpoint>,
}

impl ModelEndpoints {
    pub const SERVICES: [&'static str; 7] = [
        "reasoner",
        "perception",
        "editor",
        "embedding",
        "detection",
        "judge",
        "quality",
    ];

    fn slot(&mut self, service: &str) -> &mut Option<Endpoint> {
        match service {
            "reasoner" => &mut self.reasoner,
            "perception" => &mut self.perception,
            "editor" => &mut self.editor,
            "embedding" => &mut self.embedding,
            "detection" => &mut self.detection,
            "judge" => &mut self.judge,
            "quality" => &mut self.quality,
            other => panic!("unknown service {other}"),
        }
    }

    /// Overrides URLs from `RIVER_<SERVICE>_URL` values returned by `lookup`.
    pub fn apply_env_from(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        for service in Self::SERVICES {
            let var = format!("RIVER_{}_URL", service.to_uppercase());
            let Some(url) = lookup(&var).filter(|u| !u.is_empty()) else {
                continue;
            };
            let slot = self.slot(service);
            match slot {
                Some(ep) => ep.url = url,
                None => *slot = Some(Endpoint::new(url)),
            }
        }
    }

    pub fn apply_env(&mut self) {
        self.apply_env_from(|k| std::env::var(k).ok());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            width: 832,
            height: 480,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricSuite {
    pub metrics: Vec<String>,
    /// Every `frame_stride`-th frame goes to the embedding, detection,
    /// quality and judge services.
    pub frame_stride: usize,
    pub grounding_threshold: f64,
}

impl Default for MetricSuite {
    fn default() -> Self {
        Self {
            metrics: METRICS.iter().map(|(k, _)| k.to_string()).collect(),
            frame_stride: 1,
            grounding_threshold: GROUNDING_THRESHOLD,
        }
    }
}

impl MetricSuite {
    pub fn enabled(&self, metric: &str) -> bool {
        self.metrics.iter().any(|m| m == metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub resolution: Resolution,
    pub rollout: LoopConfig,
    pub reward: RewardConfig,
    pub grpo: GrpoConfig,
    pub metrics: MetricSuite,
    pub seed: u64,
    pub parallelism: usize,
    pub endpoints: ModelEndpoints,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resolution: Resolution::default(),
            rollout: LoopConfig::default(),
            reward: RewardConfig::default(),
            grpo: GrpoConfig::default(),
            metrics: MetricSuite::default(),
            seed: 0,
            parallelism: 1,
            endpoints: ModelEndpoints::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults) and applies environment
    /// overrides for endpoint URLs.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text, p)?
            }
            None => Self::default(),
        };
        cfg.endpoints.apply_env();
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.resolution.width == 0 || self.resolution.height == 0 {
            return Err(ConfigError::Invalid("resolution must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be positive".into()));
        }
        if self.metrics.frame_stride == 0 {
            return Err(ConfigError::Invalid("metrics.frame_stride must be positive".into()));
        }
        if let Some(m) = self
            .metrics
            .metrics
            .iter()
            .find(|m| !METRICS.iter().any(|(k, _)| k == m))
        {
            return Err(ConfigError::Invalid(format!("unknown metric `{m}`")));
        }
        self.grpo.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Loop settings with the run seed threaded through.
    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            seed: self.seed,
            ..self.rollout.clone()
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.resolution.width, self.resolution.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_file() {
        let cfg =
            PipelineConfig::from_toml("seed = 3\n[resolution]\nwidth = 64\nheight = 48\n", Path::new("x")).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.dims(), (64, 48));
        assert_eq!(cfg.rollout.max_exec_rounds, 4);
        assert_eq!(cfg.metrics.metrics.len(), 7);
        assert_eq!(cfg.loop_config().seed, 3);
        assert_eq!(PipelineConfig::default().dims(), (832, 480));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_toml("parallelism = 0", Path::new("x")).is_err());
        assert!(PipelineConfig::from_toml("[metrics]\nmetrics = [\"fid\"]", Path::new("x")).is_err());
        assert!(PipelineConfig::from_toml("[resolution]\nwidth = 0\nheight = 1", Path::new("x")).is_err());
    }

    #[test]
    fn env_overrides_urls_only() {
        let mut e = ModelEndpoints {
            judge: Some(Endpoint {
                url: "http://a".into(),
                timeout_secs: 5.0,
                retries: 0,
            }),
            ..ModelEndpoints::default()
        };
        e.apply_env_from(|k| match k {
            "RIVER_JUDGE_URL" => Some("http://b".into()),
            "RIVER_EDITOR_URL" => Some("http://c".into()),
            _ => None,
        });
        let judge = e.judge.unwrap();
        assert_eq!(
            (judge.url.as_str(), judge.timeout_secs, judge.retries),
            ("http://b", 5.0, 0)
        );
        assert_eq!(e.editor.unwrap().url, "http://c");
        assert!(e.reasoner.is_none());
    }
}
