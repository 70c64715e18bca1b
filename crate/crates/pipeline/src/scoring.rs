//! Per-sample metric suite.

use std::collections::BTreeSet;

use river_core::metrics::{
    clip_frame_consistency, clip_text_alignment, grounding_score, judge_score, psnr, ssim, to_luma, FrameBuffer,
    MetricReport, MetricsError, SsimParams, CLIP_F, CLIP_TEXT, GROUNDING, JUDGE, MUSIQ, PSNR, SSIM,
};
use thiserror::Error;

use crate::clients::{ClientError, DetectionRequest, EmbeddingKind, EmbeddingRequest, QualityRequest, Services};
use crate::config::MetricSuite;
use crate::frames::{strided, to_base64, FramesError};
use crate::run::RunOutput;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Frames(#[from] FramesError),
}

/// Frame-wise SSIM (percent) and PSNR (dB) of `edited` against `original`
/// on BT.601 luma.
pub fn fidelity(original: &[FrameBuffer], edited: &[FrameBuffer]) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    if original.len() != edited.len() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{} original frames vs {} edited",
            original.len(),
            edited.len()
        )));
    }
    let params = SsimParams::default();
    let mut ssims = Vec::with_capacity(original.len());
    let mut psnrs = Vec::with_capacity(original.len());
    for (a, b) in original.iter().zip(edited) {
        let (la, lb) = (to_luma(a), to_luma(b));
        ssims.push(100.0 * ssim(&la, &lb, &params)?);
        psnrs.push(psnr(&la, &lb)?);
    }
    Ok((ssims, psnrs))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Scores one finished run. A run whose edit was invalid scores 0 on the
/// judge metric and nothing else; a valid run without edited frames (dry
/// run) scores nothing. Metrics whose service is absent are skipped.
pub fn score_run(run: &RunOutput, services: &Services, suite: &MetricSuite) -> Result<MetricReport, ScoringError> {
    let mut report = MetricReport::default();
    let Some(edited) = run.edited_frames.as_deref() else {
        if !run.edit_valid() && suite.enabled(JUDGE) {
            report.scores.insert(JUDGE.to_string(), 0.0);
        }
        return Ok(report);
    };
    let picked = strided(edited, suite.frame_stride);
    let encoded: Vec<String> = picked.iter().map(|f| to_base64(f)).collect::<Result<_, _>>()?;
    let skip = |metric: &str, service: &str| log::warn!("{metric} skipped: no {service} service");

    if suite.enabled(SSIM) || suite.enabled(PSNR) {
        let (ssims, psnrs) = fidelity(&run.original_frames, edited)?;
        for (key, values) in [(SSIM, ssims), (PSNR, psnrs)] {
            if suite.enabled(key) {
                report.scores.insert(key.to_string(), mean(&values));
                report.series.insert(key.to_string(), values);
            }
        }
    }

    if suite.enabled(CLIP_TEXT) || suite.enabled(CLIP_F) {
        match &services.embedding {
            None => skip("clip", "embedding"),
            Some(client) => {
                let frames: Vec<Vec<f64>> = encoded
                    .iter()
                    .map(|b64| {
                        client.embed(&EmbeddingRequest {
                            kind: EmbeddingKind::Image,
                            payload: b64.clone(),
                        })
                    })
                    .collect::<Result<_, _>>()?;
                if suite.enabled(CLIP_TEXT) {
                    let text = client.embed(&EmbeddingRequest {
                        kind: EmbeddingKind::Text,
                        payload: run.record.query.clone(),
                    })?;
                    report
                        .scores
                        .insert(CLIP_TEXT.to_string(), clip_text_alignment(&frames, &text)?);
                }
                if suite.enabled(CLIP_F) {
                    report
                        .scores
                        .insert(CLIP_F.to_string(), clip_frame_consistency(&frames)?);
                }
            }
        }
    }

    if suite.enabled(MUSIQ) {
        match &services.quality {
            None => skip(MUSIQ, "quality"),
            Some(client) => {
                let values: Vec<f64> = encoded
                    .iter()
                    .map(|b64| client.score(&QualityRequest { image: b64.clone() }))
                    .collect::<Result<_, _>>()?;
                report.scores.insert(MUSIQ.to_string(), mean(&values));
                report.series.insert(MUSIQ.to_string(), values);
            }
        }
    }

    if suite.enabled(GROUNDING) {
        let labels = target_labels(run);
        match &services.detection {
            None => skip(GROUNDING, "detection"),
            Some(_) if labels.is_empty() => log::info!("grounding skipped: edit has no surviving targets"),
            Some(client) => {
                let detections = encoded
                    .iter()
                    .map(|b64| {
                        client.detect(&DetectionRequest {
                            image: b64.clone(),
                            labels: labels.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let score = grounding_score(&detections, detections.len(), &labels, suite.grounding_threshold);
                report.scores.insert(GROUNDING.to_string(), score);
            }
        }
    }

    if suite.enabled(JUDGE) {
        if let Some(v) = &run.record.verdict {
            report
                .scores
                .insert(JUDGE.to_string(), judge_score(std::slice::from_ref(v)));
        }
    }
    Ok(report)
}

/// Categories of the changed or added objects, sorted and de-duplicated.
pub fn target_labels(run: &RunOutput) -> Vec<String> {
    let Some(c) = &run.conditioning else {
        return Vec::new();
    };
    let labels: BTreeSet<String> = c
        .payload
        .spatial_guidance
        .iter()
        .filter(|g| !g.removed)
        .filter_map(|g| c.edited.instance(g.frame, g.id))
        .map(|o| o.category.clone())
        .collect();
    labels.into_iter().collect()
}
