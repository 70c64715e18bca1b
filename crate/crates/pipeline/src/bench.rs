//! Benchmark manifests, evaluation runs and reports.
//!
//! A manifest is JSON Lines. An optional first line names the benchmark,
//! every other line is one sample:
//!
//! ```text
//! {"benchmark":"rve-fixture"}
//! {"sample_id":"s1","video_ref":"videos/s1","query":"...","level":1,"category":"semantic"}
//! ```
//!
//! `video_ref` is a frame directory, relative to the manifest. Optional
//! `target_masks` holds one mask ref per frame.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use river_core::metrics::{aggregate, AggregateTable, Category, CellKey, MetricReport, SampleTag, LEVELS, METRICS};
use river_core::reward::RewardBreakdown;
use river_core::twin::MaskRef;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::clients::Services;
use crate::config::PipelineConfig;
use crate::frames::read_index;
use crate::run::{run_pipeline, RunOptions, Stage};
use crate::scoring::score_run;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line} is not parseable: {message}")]
    NotParseable { line: usize, message: String },
    #[error("sample {sample_id}: level {level} is not one of 1, 2, 3")]
    InvalidLevel { sample_id: String, level: i64 },
    #[error("sample {sample_id}: unknown category `{category}`")]
    InvalidCategory { sample_id: String, category: String },
    #[error("sample {sample_id}: video {} not found", .path.display())]
    MissingVideo { sample_id: String, path: PathBuf },
    #[error("sample {sample_id}: {masks} target masks for {frames} frames")]
    MaskMismatch {
        sample_id: String,
        masks: usize,
        frames: usize,
    },
    #[error("duplicate sample id {0}")]
    DuplicateSample(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSample {
    pub sample_id: String,
    pub video_ref: String,
    pub query: String,
    pub level: u8,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub target_masks: Vec<MaskRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub total: usize,
    pub by_level: BTreeMap<u8, usize>,
    pub by_category: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkManifest {
    pub name: String,
    /// Directory `video_ref`s are resolved against.
    pub base_dir: PathBuf,
    pub samples: Vec<BenchmarkSample>,
}

#[derive(Deserialize)]
struct RawSample {
    sample_id: String,
    video_ref: String,
    query: String,
    level: i64,
    category: String,
    #[serde(default)]
    target_masks: Vec<MaskRef>,
}

impl BenchmarkManifest {
    pub fn video_dir(&self, sample: &BenchmarkSample) -> PathBuf {
        self.base_dir.join(&sample.video_ref)
    }

    pub fn counts(&self) -> ManifestCounts {
        let mut c = ManifestCounts {
            total: self.samples.len(),
            ..ManifestCounts::default()
        };
        for s in &self.samples {
            *c.by_level.entry(s.level).or_default() += 1;
            *c.by_category.entry(s.category.to_string()).or_default() += 1;
        }
        c
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::json!({ "benchmark": self.name }).to_string();
        out.push('\n');
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses manifest text. With `check_videos`, every video directory must
    /// exist and mask counts must match its frame index.
    pub fn parse(text: &str, name: &str, base_dir: &Path, check_videos: bool) -> Result<Self, ManifestError> {
        let mut manifest = Self {
            name: name.to_string(),
            base_dir: base_dir.to_path_buf(),
            samples: Vec::new(),
        };
        let mut seen = BTreeSet::new();
        for (k, line) in text.lines().enumerate() {
            let line_no = k + 1;
            if line.trim().is_empty() {
                continue;
            }
            let not_parseable = |message: String| ManifestError::NotParseable { line: line_no, message };
            let value: Value = serde_json::from_str(line).map_err(|e| not_parseable(e.to_string()))?;
            if manifest.samples.is_empty() && value.get("sample_id").is_none() {
                if let Some(n) = value.get("benchmark").and_then(Value::as_str) {
                    manifest.name = n.to_string();
                    continue;
                }
            }
            let raw: RawSample = serde_json::from_value(value).map_err(|e| not_parseable(e.to_string()))?;
            let sample = manifest.check_sample(raw, check_videos)?;
            if !seen.insert(sample.sample_id.clone()) {
                return Err(ManifestError::DuplicateSample(sample.sample_id));
            }
            manifest.samples.push(sample);
        }
        Ok(manifest)
    }

    fn check_sample(&self, raw: RawSample, check_videos: bool) -> Result<BenchmarkSample, ManifestError> {
        let level = u8::try_from(raw.level)
            .ok()
            .filter(|l| LEVELS.contains(l))
            .ok_or_else(|| ManifestError::InvalidLevel {
                sample_id: raw.sample_id.clone(),
                level: raw.level,
            })?;
        let category: Category = raw.category.parse().map_err(|_| ManifestError::InvalidCategory {
            sample_id: raw.sample_id.clone(),
            category: raw.category.clone(),
        })?;
        let sample = BenchmarkSample {
            sample_id: raw.sample_id,
            video_ref: raw.video_ref,
            query: raw.query,
            level,
            category,
            target_masks: raw.target_masks,
        };
        if check_videos {
            let dir = self.video_dir(&sample);
            if !dir.is_dir() {
                return Err(ManifestError::MissingVideo {
                    sample_id: sample.sample_id,
                    path: dir,
                });
            }
            if !sample.target_masks.is_empty() {
                let frames = read_index(&dir).map(|i| i.frames.len()).unwrap_or(0);
                if frames != sample.target_masks.len() {
                    return Err(ManifestError::MaskMismatch {
                        sample_id: sample.sample_id,
                        masks: sample.target_masks.len(),
                        frames,
                    });
                }
            }
        }
        Ok(sample)
    }
}

pub fn load_manifest(path: &Path) -> Result<BenchmarkManifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    BenchmarkManifest::parse(&text, &name, &base, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SampleOutcome {
    Scored {
        scores: MetricReport,
        reward: RewardBreakdown,
    },
    Error {
        stage: Stage,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reward: Option<RewardBreakdown>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample_id: String,
    pub level: u8,
    pub category: Category,
    #[serde(flatten)]
    pub outcome: SampleOutcome,
}

impl SampleResult {
    pub fn reward(&self) -> Option<&RewardBreakdown> {
        match &self.outcome {
            SampleOutcome::Scored { reward, .. } => Some(reward),
            SampleOutcome::Error { reward, .. } => reward.as_ref(),
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self.outcome, SampleOutcome::Error { .. })
    }
}

/// Every sample exactly once, ordered by sample_id.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRunReport {
    pub benchmark: String,
    pub samples: Vec<SampleResult>,
}

impl EvalRunReport {
    pub fn new(benchmark: impl Into<String>, mut samples: Vec<SampleResult>) -> Self {
        samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        Self {
            benchmark: benchmark.into(),
            samples,
        }
    }

    /// Aggregates the scored samples; error rows contribute nothing.
    pub fn table(&self) -> AggregateTable {
        let scored: Vec<(SampleTag, MetricReport)> = self
            .samples
            .iter()
            .filter_map(|s| match &s.outcome {
                SampleOutcome::Scored { scores, .. } => Some((
                    SampleTag {
                        sample_id: s.sample_id.clone(),
                        level: s.level,
                        category: s.category,
                    },
                    scores.clone(),
                )),
                SampleOutcome::Error { .. } => None,
            })
            .collect();
        aggregate(&scored)
    }

    pub fn error_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_error()).count()
    }

    /// Header line plus one JSON line per sample.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::json!({ "benchmark": self.benchmark }).to_string();
        out.push('\n');
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample result serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ManifestError> {
        let mut benchmark = String::new();
        let mut samples = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let not_parseable = |e: serde_json::Error| ManifestError::NotParseable {
                line: k + 1,
                message: e.to_string(),
            };
            let value: Value = serde_json::from_str(line).map_err(not_parseable)?;
            if k == 0 && value.get("sample_id").is_none() {
                benchmark = value
                    .get("benchmark")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string();
                continue;
            }
            samples.push(serde_json::from_value(value).map_err(not_parseable)?);
        }
        Ok(Self::new(benchmark, samples))
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub no_editor: bool,
    /// Edited frames go to `<output_dir>/<sample_id>/`.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

fn evaluate_sample(
    manifest: &BenchmarkManifest,
    sample: &BenchmarkSample,
    services: &Services,
    cfg: &PipelineConfig,
    opts: &EvalOptions,
) -> SampleResult {
    let run_opts = RunOptions {
        no_editor: opts.no_editor,
        output_dir: opts.output_dir.as_ref().map(|d| d.join(&sample.sample_id)),
    };
    let run = run_pipeline(&manifest.video_dir(sample), &sample.query, cfg, services, &run_opts);
    let outcome = match (&run.record.failure, &run.record.reward) {
        (Some(f), reward) => SampleOutcome::Error {
            stage: f.stage,
            message: f.message.clone(),
            reward: reward.clone(),
        },
        (None, None) => SampleOutcome::Error {
            stage: Stage::Rollout,
            message: "run produced no reward".into(),
            reward: None,
        },
        (None, Some(reward)) => match score_run(&run, services, &cfg.metrics) {
            Ok(scores) => SampleOutcome::Scored {
                scores,
                reward: reward.clone(),
            },
            Err(e) => SampleOutcome::Error {
                stage: Stage::Metrics,
                message: e.to_string(),
                reward: Some(reward.clone()),
            },
        },
    };
    SampleResult {
        sample_id: sample.sample_id.clone(),
        level: sample.level,
        category: sample.category,
        outcome,
    }
}

/// Evaluates every sample on up to `parallelism` workers. Per-sample
/// failures become error rows; the result does not depend on sample order
/// or parallelism.
pub fn run_eval(
    manifest: &BenchmarkManifest,
    services: &Services,
    cfg: &PipelineConfig,
    parallelism: usize,
    opts: &EvalOptions,
) -> Result<EvalRunReport, BenchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let samples = pool.install(|| {
        manifest
            .samples
            .par_iter()
            .map(|s| evaluate_sample(manifest, s, services, cfg, opts))
            .collect()
    });
    Ok(EvalRunReport::new(manifest.name.clone(), samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

/// Metric keys in table order: the seven standard metrics, then any others
/// alphabetically.
fn metric_order(table: &AggregateTable) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = METRICS
        .iter()
        .filter(|(k, _)| table.cells.contains_key(*k))
        .map(|(k, h)| (k.to_string(), h.to_string()))
        .collect();
    for k in table.cells.keys() {
        if !METRICS.iter().any(|(m, _)| m == k) {
            out.push((k.clone(), k.clone()));
        }
    }
    out
}

fn cell_keys() -> Vec<CellKey> {
    let mut keys: Vec<CellKey> = LEVELS
        .iter()
        .map(|&l| CellKey {
            level: Some(l),
            category: None,
        })
        .collect();
    keys.extend(Category::ALL.iter().map(|&c| CellKey {
        level: None,
        category: Some(c),
    }));
    keys.push(CellKey {
        level: None,
        category: None,
    });
    keys
}

pub fn render_report(report: &EvalRunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Text => render_text(report),
    }
}

fn render_csv(report: &EvalRunReport) -> String {
    let table = report.table();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "level", "category", "mean", "std", "n"])
        .expect("in-memory write");
    for (metric, _) in metric_order(&table) {
        for key in cell_keys() {
            let Some(c) = table.get(&metric, key) else { continue };
            let level = key.level.map_or("all".to_string(), |l| l.to_string());
            let category = key.category.map_or("all", Category::as_str);
            w.write_record([
                metric.as_str(),
                &level,
                category,
                &format!("{:.4}", c.mean),
                &format!("{:.4}", c.std),
                &c.n.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn table_block(out: &mut String, headers: &[String], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = headers.iter().map(String::len).collect();
    for row in rows {
        for (k, cell) in row.iter().enumerate() {
            widths[k] = widths[k].max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if k == 0 {
                    format!("{c:<w$}", w = widths[k])
                } else {
                    format!("{c:>w$}", w = widths[k])
                }
            })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    writeln!(out, "{}", line(headers)).unwrap();
    writeln!(
        out,
        "{}",
        widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-")
    )
    .unwrap();
    for row in rows {
        writeln!(out, "{}", line(row)).unwrap();
    }
}

/// Levels as columns (mean), then categories as columns (mean ± std).
fn render_text(report: &EvalRunReport) -> String {
    let table = report.table();
    let metrics = metric_order(&table);
    let mut out = String::new();
    writeln!(
        out,
        "{}: {} samples, {} errors\n",
        report.benchmark,
        report.samples.len(),
        report.error_count()
    )
    .unwrap();

    let overall = CellKey {
        level: None,
        category: None,
    };
    let mean_cell = |metric: &str, key: CellKey| {
        table
            .get(metric, key)
            .map_or("-".to_string(), |c| format!("{:.2}", c.mean))
    };
    let pm_cell = |metric: &str, key: CellKey| {
        table
            .get(metric, key)
            .map_or("-".to_string(), |c| format!("{:.2} ± {:.2}", c.mean, c.std))
    };

    let mut headers = vec!["Metric".to_string()];
    headers.extend(LEVELS.iter().map(|l| format!("Level {l}")));
    headers.push("Overall".into());
    let rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|(key, heading)| {
            let mut row = vec![heading.clone()];
            row.extend(LEVELS.iter().map(|&l| {
                mean_cell(
                    key,
                    CellKey {
                        level: Some(l),
                        category: None,
                    },
                )
            }));
            row.push(mean_cell(key, overall));
            row
        })
        .collect();
    table_block(&mut out, &headers, &rows);
    out.push('\n');

    let mut headers = vec!["Metric".to_string()];
    headers.extend(Category::ALL.iter().map(|c| {
        let s = c.as_str();
        s[..1].to_uppercase() + &s[1..]
    }));
    headers.push("Overall".into());
    let rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|(key, heading)| {
            let mut row = vec![heading.clone()];
            row.extend(Category::ALL.iter().map(|&c| {
                pm_cell(
                    key,
                    CellKey {
                        level: None,
                        category: Some(c),
                    },
                )
            }));
            row.push(pm_cell(key, overall));
            row
        })
        .collect();
    table_block(&mut out, &headers, &rows);

    let rewards: Vec<f64> = report
        .samples
        .iter()
        .filter_map(|s| s.reward().map(|r| r.total))
        .collect();
    if !rewards.is_empty() {
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        writeln!(out, "\nMean reward: {mean:.4} over {} samples", rewards.len()).unwrap();
    }
    let errors: Vec<&SampleResult> = report.samples.iter().filter(|s| s.is_error()).collect();
    if !errors.is_empty() {
        writeln!(out, "\nErrors:").unwrap();
        for s in errors {
            if let SampleOutcome::Error { stage, message, .. } = &s.outcome {
                writeln!(out, "  {} [{stage}]: {message}", s.sample_id).unwrap();
            }
        }
    }
    out
}
