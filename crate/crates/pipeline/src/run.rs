//! One query against one video: twin, rollout, rewards, conditioning,
//! editor, judge.

use std::fmt;
use std::path::{Path, PathBuf};

use river_core::metrics::FrameBuffer;
use river_core::reward::{score_rollout, JudgeVerdict, RewardBreakdown};
use river_core::rollout::{drive_loop, extract_edit, ExecOutcome, RolloutError, RolloutTranscript};
use river_core::twin::{ValidationReport, VideoTwin};
use serde::{Deserialize, Serialize};

use crate::clients::{EditorRequest, JudgeRequest, Services};
use crate::conditioning::{build_conditioning, Conditioning, ConditioningPayload};
use crate::config::PipelineConfig;
use crate::frames::{from_base64, load_frames, strided, to_base64, write_frames};
use crate::perception::build_twin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Frames,
    Twin,
    Rollout,
    Conditioning,
    Editor,
    Judge,
    Metrics,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().expect("stage is a string"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

fn failed(stage: Stage, err: impl fmt::Display) -> StageFailure {
    StageFailure {
        stage,
        message: err.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query: String,
    pub seed: u64,
    pub transcript: Option<RolloutTranscript>,
    pub outcomes: Vec<ExecOutcome>,
    pub round_limit_hit: bool,
    pub reward: Option<RewardBreakdown>,
    pub validation: Option<ValidationReport>,
    pub payload: Option<ConditioningPayload>,
    pub editor_called: bool,
    pub verdict: Option<JudgeVerdict>,
    pub edited_frames: Vec<PathBuf>,
    pub failure: Option<StageFailure>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Never contact the editor, even when one is configured.
    pub no_editor: bool,
    /// Where edited frames are written.
    pub output_dir: Option<PathBuf>,
}

/// A record plus the in-memory artifacts later stages need.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub twin: Option<VideoTwin>,
    pub conditioning: Option<Conditioning>,
    pub original_frames: Vec<FrameBuffer>,
    pub edited_frames: Option<Vec<FrameBuffer>>,
}

impl RunOutput {
    /// True when the rollout produced a schema-valid edit.
    pub fn edit_valid(&self) -> bool {
        self.record.validation.as_ref().is_some_and(|v| v.valid)
    }
}

pub fn edit_video(
    video_ref: &Path,
    query: &str,
    cfg: &PipelineConfig,
    services: &Services,
    opts: &RunOptions,
) -> RunRecord {
    run_pipeline(video_ref, query, cfg, services, opts).record
}

/// Runs every stage it can. The first failing stage is recorded and ends
/// the run; an invalid edit ends it early without a failure.
pub fn run_pipeline(
    video_ref: &Path,
    query: &str,
    cfg: &PipelineConfig,
    services: &Services,
    opts: &RunOptions,
) -> RunOutput {
    let mut out = RunOutput {
        record: RunRecord {
            query: query.to_string(),
            seed: cfg.seed,
            transcript: None,
            outcomes: Vec::new(),
            round_limit_hit: false,
            reward: None,
            validation: None,
            payload: None,
            editor_called: false,
            verdict: None,
            edited_frames: Vec::new(),
            failure: None,
        },
        twin: None,
        conditioning: None,
        original_frames: Vec::new(),
        edited_frames: None,
    };
    if let Err(f) = stages(video_ref, query, cfg, services, opts, &mut out) {
        log::warn!("{}: {} stage failed: {}", video_ref.display(), f.stage, f.message);
        out.record.failure = Some(f);
    }
    out
}

fn stages(
    video_ref: &Path,
    query: &str,
    cfg: &PipelineConfig,
    services: &Services,
    opts: &RunOptions,
    out: &mut RunOutput,
) -> Result<(), StageFailure> {
    out.original_frames = load_frames(video_ref, Some(cfg.dims())).map_err(|e| failed(Stage::Frames, e))?;
    let twin = build_twin(video_ref, services.perception.as_deref(), Some(cfg.dims()), &[])
        .map_err(|e| failed(Stage::Twin, e))?;
    out.twin = Some(twin.clone());

    let reasoner = services.reasoner().map_err(|e| failed(Stage::Rollout, e))?;
    let (transcript, outcomes) = match drive_loop(reasoner, &twin, query, &cfg.loop_config()) {
        Ok(r) => r,
        Err(RolloutError::RoundLimitExceeded {
            transcript, outcomes, ..
        }) => {
            out.record.round_limit_hit = true;
            (*transcript, outcomes)
        }
        Err(e) => return Err(failed(Stage::Rollout, e)),
    };
    let (reward, report) = score_rollout(&transcript, &outcomes, &twin, None, &cfg.reward);
    let valid = report.valid;
    out.record.reward = Some(reward);
    out.record.validation = Some(report);
    out.record.outcomes = outcomes;
    out.record.transcript = Some(transcript);
    if !valid {
        return Ok(());
    }

    let transcript = out.record.transcript.as_ref().expect("set above");
    let edit = extract_edit(transcript).map_err(|e| failed(Stage::Conditioning, e))?;
    let conditioning = build_conditioning(&twin, edit).map_err(|e| failed(Stage::Conditioning, e))?;
    out.record.payload = Some(conditioning.payload.clone());
    let guidance = conditioning
        .payload
        .wire_guidance(video_ref)
        .map_err(|e| failed(Stage::Conditioning, e))?;
    let descriptions = conditioning.payload.text_descriptions.clone();
    out.conditioning = Some(conditioning);

    let editor = match &services.editor {
        Some(e) if !opts.no_editor => e,
        _ => return Ok(()),
    };
    let encode = |frames: &[&FrameBuffer]| -> Result<Vec<String>, StageFailure> {
        frames
            .iter()
            .map(|f| to_base64(f).map_err(|e| failed(Stage::Editor, e)))
            .collect()
    };
    let request = EditorRequest {
        frames: encode(&out.original_frames.iter().collect::<Vec<_>>())?,
        descriptions,
        guidance,
    };
    out.record.editor_called = true;
    let response = editor.edit(&request).map_err(|e| failed(Stage::Editor, e))?;
    let edited: Vec<FrameBuffer> = response
        .frames
        .iter()
        .map(|f| from_base64(f).map_err(|e| failed(Stage::Editor, e)))
        .collect::<Result<_, _>>()?;
    if edited.len() != out.original_frames.len() {
        return Err(failed(
            Stage::Editor,
            format!(
                "editor returned {} frames for {}",
                edited.len(),
                out.original_frames.len()
            ),
        ));
    }
    let original = &out.original_frames[0];
    if edited
        .iter()
        .any(|f| (f.width(), f.height()) != (original.width(), original.height()))
    {
        return Err(failed(Stage::Editor, "editor changed the frame size"));
    }
    if let Some(dir) = &opts.output_dir {
        out.record.edited_frames = write_frames(dir, &edited).map_err(|e| failed(Stage::Editor, e))?;
    }
    out.edited_frames = Some(edited);

    let Some(judge) = &services.judge else {
        return Ok(());
    };
    let stride = cfg.metrics.frame_stride;
    let edited = out.edited_frames.as_deref().expect("set above");
    let request = JudgeRequest {
        query: query.to_string(),
        frames_original: encode(&strided(&out.original_frames, stride))?,
        frames_edited: encode(&strided(edited, stride))?,
    };
    let verdict = judge.judge(&request).map_err(|e| failed(Stage::Judge, e))?;
    let transcript = out.record.transcript.as_ref().expect("set above");
    let (reward, _) = score_rollout(transcript, &out.record.outcomes, &twin, Some(&verdict), &cfg.reward);
    out.record.reward = Some(reward);
    out.record.verdict = Some(verdict);
    Ok(())
}
