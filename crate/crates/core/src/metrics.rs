//! Quality metrics and their aggregation by reasoning level and category.
//!
//! PSNR and SSIM are computed natively. The semantic scores take client
//! responses (embeddings, detections, judge verdicts) and reduce them to
//! percentages.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::JudgeVerdict;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const GROUNDING_THRESHOLD: f64 = 0.35;

pub const CLIP_TEXT: &str = "clip_text";
pub const CLIP_F: &str = "clip_f";
pub const MUSIQ: &str = "musiq";
pub const SSIM: &str = "ssim";
pub const PSNR: &str = "psnr";
pub const GROUNDING: &str = "grounding";
pub const JUDGE: &str = "judge";

/// Metric keys in report order, with their table headings.
pub const METRICS: [(&str, &str); 7] = [
    (CLIP_TEXT, "CLIP-Text"),
    (CLIP_F, "CLIP-F"),
    (MUSIQ, "MUSIQ"),
    (SSIM, "SSIM"),
    (PSNR, "PSNR"),
    (GROUNDING, "GroundingDINO"),
    (JUDGE, "LLM-as-a-Judge"),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("frame {width}x{height} is smaller than the {window}x{window} window")]
    TooSmall { width: u32, height: u32, window: usize },
    #[error("expected a single-channel frame, got {0} channels")]
    NotSingleChannel(u8),
    #[error("invalid frame buffer: {0}")]
    InvalidBuffer(String),
    #[error("need at least {needed} frames, got {got}")]
    InsufficientFrames { needed: usize, got: usize },
    #[error("embedding {0} has zero norm")]
    ZeroNorm(usize),
}

/// Row-major 8-bit image with 1 or 3 interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    width: u32,
    height: u32,
    channels: u8,
    samples: Vec<u8>,
}

impl FrameBuffer {
    pub fn new(width: u32, height: u32, channels: u8, samples: Vec<u8>) -> Result<Self, MetricsError> {
        if width == 0 || height == 0 {
            return Err(MetricsError::InvalidBuffer("zero dimension".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(MetricsError::InvalidBuffer(format!("{channels} channels")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if samples.len() != expected {
            return Err(MetricsError::InvalidBuffer(format!(
                "{} samples for {width}x{height}x{channels}",
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self, MetricsError> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width as usize * height as usize * channels as usize],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    fn same_shape(&self, other: &FrameBuffer) -> Result<(), MetricsError> {
        if (self.width, self.height, self.channels) != (other.width, other.height, other.channels) {
            return Err(MetricsError::DimensionMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(())
    }
}

/// BT.601 luma, rounded to the nearest integer.
pub fn to_luma(frame: &FrameBuffer) -> FrameBuffer {
    if frame.channels == 1 {
        return frame.clone();
    }
    let samples = frame
        .samples
        .chunks_exact(3)
        .map(|p| {
            (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect();
    FrameBuffer {
        width: frame.width,
        height: frame.height,
        channels: 1,
        samples,
    }
}

/// Peak signal-to-noise ratio in dB with MAX = 255, capped for identical inputs.
pub fn psnr(a: &FrameBuffer, b: &FrameBuffer) -> Result<f64, MetricsError> {
    a.same_shape(b)?;
    let sse: f64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = sse / a.samples.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let centre = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|k| (-(k as f64 - centre).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Valid-mode separable filtering of a `w`×`h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = kernel.iter().enumerate().map(|(k, wk)| wk * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * rows[(y + k) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean structural similarity over all valid window positions.
pub fn ssim(a: &FrameBuffer, b: &FrameBuffer, params: &SsimParams) -> Result<f64, MetricsError> {
    a.same_shape(b)?;
    if a.channels != 1 {
        return Err(MetricsError::NotSingleChannel(a.channels));
    }
    let (w, h) = (a.width as usize, a.height as usize);
    if w < params.window || h < params.window {
        return Err(MetricsError::TooSmall {
            width: a.width,
            height: a.height,
            window: params.window,
        });
    }
    let kernel = gaussian_kernel(params.window, params.sigma);
    let pa: Vec<f64> = a.samples.iter().map(|&v| v as f64).collect();
    let pb: Vec<f64> = b.samples.iter().map(|&v| v as f64).collect();
    let product = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };

    let mu_a = filter_valid(&pa, w, h, &kernel);
    let mu_b = filter_valid(&pb, w, h, &kernel);
    let e_aa = filter_valid(&product(&pa, &pa), w, h, &kernel);
    let e_bb = filter_valid(&product(&pb, &pb), w, h, &kernel);
    let e_ab = filter_valid(&product(&pa, &pb), w, h, &kernel);

    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let mut total = 0.0;
    for k in 0..mu_a.len() {
        let (ma, mb) = (mu_a[k], mu_b[k]);
        let var_a = e_aa[k] - ma * ma;
        let var_b = e_bb[k] - mb * mb;
        let cov = e_ab[k] - ma * mb;
        let num = (2.0 * (ma * mb) + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    Ok(total / mu_a.len() as f64)
}

fn cosine(a: &[f64], b: &[f64], ia: usize, ib: usize) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DimensionMismatch(format!(
            "embedding lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 {
        return Err(MetricsError::ZeroNorm(ia));
    }
    if nb == 0.0 {
        return Err(MetricsError::ZeroNorm(ib));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Mean cosine similarity of consecutive frame embeddings, ×100.
pub fn clip_frame_consistency(frames: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if frames.len() < 2 {
        return Err(MetricsError::InsufficientFrames {
            needed: 2,
            got: frames.len(),
        });
    }
    let mut total = 0.0;
    for k in 1..frames.len() {
        total += cosine(&frames[k - 1], &frames[k], k - 1, k)?;
    }
    Ok(100.0 * total / (frames.len() - 1) as f64)
}

/// Mean cosine similarity between each frame and the text embedding, ×100.
/// Index `frames.len()` in a `ZeroNorm` error denotes the text embedding.
pub fn clip_text_alignment(frames: &[Vec<f64>], text: &[f64]) -> Result<f64, MetricsError> {
    if frames.is_empty() {
        return Err(MetricsError::InsufficientFrames { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    for (k, f) in frames.iter().enumerate() {
        total += cosine(f, text, k, frames.len())?;
    }
    Ok(100.0 * total / frames.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

/// Percentage of `frame_count` frames in which every target label is detected
/// at or above `threshold`. Frames without a detection list count as failures.
pub fn grounding_score(
    detections: &[Vec<Detection>],
    frame_count: usize,
    target_labels: &[String],
    threshold: f64,
) -> f64 {
    if frame_count == 0 {
        return 0.0;
    }
    let hits = detections
        .iter()
        .take(frame_count)
        .filter(|frame| {
            target_labels
                .iter()
                .all(|label| frame.iter().any(|d| &d.label == label && d.confidence >= threshold))
        })
        .count();
    100.0 * hits as f64 / frame_count as f64
}

/// Percentage of correct verdicts; 0 for an empty list.
pub fn judge_score(verdicts: &[JudgeVerdict]) -> f64 {
    if verdicts.is_empty() {
        return 0.0;
    }
    100.0 * verdicts.iter().filter(|v| v.correct).count() as f64 / verdicts.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Semantic,
    Spatial,
    Temporal,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Semantic, Category::Spatial, Category::Temporal];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Semantic => "semantic",
            Category::Spatial => "spatial",
            Category::Temporal => "temporal",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

pub const LEVELS: [u8; 3] = [1, 2, 3];

/// Per-sample scores on the reporting scale (SSIM and the semantic scores in
/// percent, PSNR in dB), with per-frame series for frame-wise metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub series: BTreeMap<String, Vec<f64>>,
}

/// Identity and taxonomy of one evaluated sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTag {
    pub sample_id: String,
    pub level: u8,
    pub category: Category,
}

/// Which samples a cell summarizes. `None` means all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub level: Option<u8>,
    pub category: Option<Category>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

/// Metric × group table; empty groups have no cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub cells: BTreeMap<String, BTreeMap<CellKey, CellStats>>,
}

impl AggregateTable {
    pub fn get(&self, metric: &str, key: CellKey) -> Option<&CellStats> {
        self.cells.get(metric)?.get(&key)
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn stats(values: &[f64]) -> CellStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    CellStats {
        mean,
        std: var.sqrt(),
        n: values.len(),
    }
}

/// Mean and population std per metric for every level, every category and
/// overall. Inputs are folded in sample_id order, so the result does not
/// depend on the order of `reports`.
pub fn aggregate(reports: &[(SampleTag, MetricReport)]) -> AggregateTable {
    let mut sorted: Vec<&(SampleTag, MetricReport)> = reports.iter().collect();
    sorted.sort_by(|a, b| a.0.sample_id.cmp(&b.0.sample_id));
    let mut buckets: BTreeMap<String, BTreeMap<CellKey, Vec<f64>>> = BTreeMap::new();
    for (tag, report) in sorted {
        for (metric, &value) in &report.scores {
            let per_metric = buckets.entry(metric.clone()).or_default();
            for key in [
                CellKey {
                    level: Some(tag.level),
                    category: None,
                },
                CellKey {
                    level: None,
                    category: Some(tag.category),
                },
                CellKey {
                    level: None,
                    category: None,
                },
            ] {
                per_metric.entry(key).or_default().push(value);
            }
        }
    }
    AggregateTable {
        cells: buckets
            .into_iter()
            .map(|(m, cells)| (m, cells.into_iter().map(|(k, v)| (k, stats(&v))).collect()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32, v: u8) -> FrameBuffer {
        FrameBuffer::filled(w, h, 1, v).unwrap()
    }

    #[test]
    fn psnr_examples() {
        assert_eq!(psnr(&gray(4, 4, 7), &gray(4, 4, 7)).unwrap(), 100.0);
        let p = psnr(&gray(4, 4, 100), &gray(4, 4, 116)).unwrap();
        assert!((p - 24.0487).abs() < 1e-3);
        assert_eq!(psnr(&gray(4, 4, 0), &gray(4, 4, 255)).unwrap(), 0.0);
        assert!(matches!(
            psnr(&gray(4, 4, 0), &gray(4, 5, 0)),
            Err(MetricsError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ssim_examples() {
        let p = SsimParams::default();
        assert_eq!(ssim(&gray(16, 16, 90), &gray(16, 16, 90), &p).unwrap(), 1.0);
        let c1 = (0.01f64 * 255.0).powi(2);
        let s = ssim(&gray(16, 16, 0), &gray(16, 16, 255), &p).unwrap();
        assert!((s - c1 / (255.0f64.powi(2) + c1)).abs() < 1e-6);
        assert!(matches!(
            ssim(&gray(8, 8, 0), &gray(8, 8, 0), &p),
            Err(MetricsError::TooSmall { .. })
        ));
        let rgb = FrameBuffer::filled(16, 16, 3, 0).unwrap();
        assert!(matches!(ssim(&rgb, &rgb, &p), Err(MetricsError::NotSingleChannel(3))));
    }

    #[test]
    fn luma_weights() {
        let f = FrameBuffer::new(1, 1, 3, vec![255, 0, 0]).unwrap();
        assert_eq!(to_luma(&f).samples(), &[76]);
    }

    #[test]
    fn clip_examples() {
        assert!((clip_frame_consistency(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(clip_frame_consistency(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), 0.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v = clip_frame_consistency(&[vec![1.0, 0.0], vec![h, h], vec![0.0, 1.0]]).unwrap();
        assert!((v - 70.710678).abs() < 1e-5);
        assert_eq!(clip_text_alignment(&[vec![0.0, 1.0]], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(
            clip_frame_consistency(&[vec![1.0]]),
            Err(MetricsError::InsufficientFrames { needed: 2, got: 1 })
        );
        assert_eq!(
            clip_text_alignment(&[vec![0.0, 0.0]], &[1.0, 0.0]),
            Err(MetricsError::ZeroNorm(0))
        );
    }

    #[test]
    fn grounding_and_judge() {
        let det = |c| {
            vec![Detection {
                label: "dog".into(),
                confidence: c,
                bbox: [0.0, 0.0, 1.0, 1.0],
            }]
        };
        let labels = vec!["dog".to_string()];
        assert_eq!(
            grounding_score(&[det(0.9), det(0.35), det(0.1), det(0.5)], 4, &labels, 0.35),
            75.0
        );
        assert_eq!(grounding_score(&[det(0.9)], 4, &labels, 0.35), 25.0);
        let v = |correct| JudgeVerdict {
            correct,
            rationale: String::new(),
        };
        assert_eq!(judge_score(&[v(true), v(false), v(true), v(false), v(false)]), 40.0);
    }

    #[test]
    fn aggregate_examples() {
        let sample = |id: &str, level, psnr| {
            (
                SampleTag {
                    sample_id: id.into(),
                    level,
                    category: Category::Spatial,
                },
                MetricReport {
                    scores: [(PSNR.to_string(), psnr)].into(),
                    series: BTreeMap::new(),
                },
            )
        };
        let table = aggregate(&[sample("a", 1, 10.0), sample("b", 1, 20.0)]);
        let l1 = table
            .get(
                PSNR,
                CellKey {
                    level: Some(1),
                    category: None,
                },
            )
            .unwrap();
        assert_eq!((l1.mean, l1.std, l1.n), (15.0, 5.0, 2));
        assert!(table
            .get(
                PSNR,
                CellKey {
                    level: Some(2),
                    category: None
                }
            )
            .is_none());
        assert!(aggregate(&[]).is_empty());
    }
}
