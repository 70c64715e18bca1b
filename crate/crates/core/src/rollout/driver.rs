use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parse::{parse_rollout, RolloutTranscript, SegmentKind};
use crate::twin::{serialize_twin, VideoTwin};
use crate::twinql::{evaluate, parse_program, render_value, EvalError, EvalLimits};

pub const STOP_SEQUENCES: [&str; 2] = ["</execute>", "</edit>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Request body sent to a reasoner endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerRequest {
    pub messages: Vec<ChatMessage>,
    pub stop: Vec<String>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonerResponse {
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReasonerError {
    #[error("reasoner unreachable: {0}")]
    Unreachable(String),
    #[error("malformed reasoner response: {0}")]
    BadResponse(String),
}

/// A chat-completion backend. When the conversation already holds partial
/// output, the last message is an assistant message to be continued.
pub trait Reasoner {
    fn complete(&self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError>;
}

impl<R: Reasoner + ?Sized> Reasoner for &R {
    fn complete(&self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub max_exec_rounds: usize,
    pub step_budget: u64,
    pub list_cap: usize,
    pub prompt_template_id: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        let limits = EvalLimits::default();
        Self {
            max_exec_rounds: 4,
            step_budget: limits.step_budget,
            list_cap: limits.list_cap,
            prompt_template_id: DEFAULT_TEMPLATE.to_string(),
            max_tokens: 2048,
            temperature: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExecStatus {
    Ok { rendered: String },
    Error { kind: String, message: String },
}

/// Result of running one `<execute>` block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub code: String,
    #[serde(flatten)]
    pub status: ExecStatus,
}

impl ExecOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self.status, ExecStatus::Ok { .. })
    }

    /// Body injected between `<results>` delimiters.
    pub fn results_body(&self) -> String {
        match &self.status {
            ExecStatus::Ok { rendered } => rendered.clone(),
            ExecStatus::Error { kind, message } => format!("error ({kind}): {message}"),
        }
    }
}

/// Runs the code found in an `<execute>` block.
pub trait CodeExecutor {
    fn execute(&self, code: &str, twin: &VideoTwin, cfg: &LoopConfig) -> ExecStatus;
}

/// The default executor: TwinQL with the loop's limits.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwinqlExecutor;

fn eval_error_kind(e: &EvalError) -> &'static str {
    match e {
        EvalError::BudgetExceeded { .. } => "budget_exceeded",
        EvalError::ListCapExceeded { .. } => "list_cap_exceeded",
        EvalError::TypeError { .. } => "type_error",
        EvalError::UnknownIdentifier { .. } => "unknown_identifier",
        EvalError::FrameOutOfRange { .. } => "frame_out_of_range",
        EvalError::MissingObject { .. } => "missing_object",
        EvalError::IndexOutOfRange { .. } => "index_out_of_range",
        EvalError::Arithmetic { .. } => "arithmetic",
    }
}

impl CodeExecutor for TwinqlExecutor {
    fn execute(&self, code: &str, twin: &VideoTwin, cfg: &LoopConfig) -> ExecStatus {
        let limits = EvalLimits {
            step_budget: cfg.step_budget,
            list_cap: cfg.list_cap,
        };
        match parse_program(code) {
            Err(e) => ExecStatus::Error {
                kind: "syntax_error".into(),
                message: e.to_string(),
            },
            Ok(ast) => match evaluate(&ast, twin, &limits) {
                Ok(v) => ExecStatus::Ok {
                    rendered: render_value(&v),
                },
                Err(e) => ExecStatus::Error {
                    kind: eval_error_kind(&e).into(),
                    message: e.to_string(),
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RolloutError {
    #[error("transcript has no final edit segment")]
    NoEditSegment,
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error("exceeded {max_exec_rounds} execute rounds")]
    RoundLimitExceeded {
        max_exec_rounds: usize,
        transcript: Box<RolloutTranscript>,
        outcomes: Vec<ExecOutcome>,
    },
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("invalid loop config: {0}")]
    InvalidConfig(String),
}

/// Body of the final Edit segment, byte for byte.
pub fn extract_edit(transcript: &RolloutTranscript) -> Result<&str, RolloutError> {
    match transcript.segments.last() {
        Some(seg) if transcript.complete && seg.kind == SegmentKind::Edit => Ok(&seg.body),
        _ => Err(RolloutError::NoEditSegment),
    }
}

pub const DEFAULT_TEMPLATE: &str = "river-v1";

const SYSTEM_V1: &str = "You edit videos by editing their digital twin, a JSON document listing the \
objects of every frame with id, category, attributes, mask_ref and spatial {x, y, depth, size} \
(all normalized to [0, 1]; depth 0 is nearest).

Answer with exactly this sequence and nothing outside the tags:
<think>analyse the query and identify the target objects</think>
optionally one or more rounds of
<execute>a TwinQL expression</execute>
after each of which the system appends <results>the value</results>; never write <results> yourself.
Finish with
<edit>the complete edited twin JSON</edit>

TwinQL is a single expression. Builtins: objects(frame=t), frames(), obj(t, id), count, category, \
attributes, has_attribute, attr, id, frame, x, y, depth, size, distance, leftmost, rightmost, \
nearest, farthest, largest, smallest, frames_present(id), displacement(id, t1, t2), \
filter(list, predicate), min_by/max_by/sort_by(list, key=...), sum, mean, min, max, abs, unique. \
Comprehensions [e for o in list if cond] and lambda o: expr are allowed.";

/// Builds the opening conversation for a template.
pub fn prompt_messages(template_id: &str, twin: &VideoTwin, query: &str) -> Result<Vec<ChatMessage>, RolloutError> {
    if template_id != DEFAULT_TEMPLATE {
        return Err(RolloutError::UnknownTemplate(template_id.to_string()));
    }
    Ok(vec![
        ChatMessage {
            role: Role::System,
            content: SYSTEM_V1.to_string(),
        },
        ChatMessage {
            role: Role::User,
            content: format!("Digital twin:\n{}\n\nQuery: {}", serialize_twin(twin), query),
        },
    ])
}

/// Cuts a response after its first stop sequence, or restores a stop
/// sequence the server stripped from an open block at the end.
fn normalize_chunk(content: &str) -> String {
    let first_stop = STOP_SEQUENCES
        .iter()
        .filter_map(|s| content.find(s).map(|p| p + s.len()))
        .min();
    if let Some(end) = first_stop {
        return content[..end].to_string();
    }
    let mut chunk = content.to_string();
    for kind in [SegmentKind::Execute, SegmentKind::Edit] {
        let open = kind.open();
        let Some(start) = content.rfind(&open) else { continue };
        let later_open = SegmentKind::ALL
            .iter()
            .any(|k| content[start + open.len()..].contains(&k.open()));
        if !later_open {
            chunk.push_str(&kind.close());
            break;
        }
    }
    chunk
}

/// Drives the reasoner with the default TwinQL executor.
pub fn drive_loop(
    reasoner: &dyn Reasoner,
    twin: &VideoTwin,
    query: &str,
    cfg: &LoopConfig,
) -> Result<(RolloutTranscript, Vec<ExecOutcome>), RolloutError> {
    drive_loop_with(reasoner, &TwinqlExecutor, twin, query, cfg)
}

/// Alternates reasoner turns with code execution until a closed `<edit>`
/// block, a turn with neither `<execute>` nor `<edit>`, or the round limit.
pub fn drive_loop_with(
    reasoner: &dyn Reasoner,
    executor: &dyn CodeExecutor,
    twin: &VideoTwin,
    query: &str,
    cfg: &LoopConfig,
) -> Result<(RolloutTranscript, Vec<ExecOutcome>), RolloutError> {
    if cfg.max_exec_rounds == 0 {
        return Err(RolloutError::InvalidConfig("max_exec_rounds must be at least 1".into()));
    }
    let opening = prompt_messages(&cfg.prompt_template_id, twin, query)?;
    let mut stitched = String::new();
    let mut forged = Vec::new();
    let mut outcomes = Vec::new();

    let finish = |stitched: &str, forged: &[usize]| {
        let mut transcript = parse_rollout(stitched);
        let starts: Vec<usize> = transcript
            .segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Results && forged.contains(&s.span.0))
            .map(|s| s.span.0)
            .collect();
        for start in starts {
            transcript.mark_stray(start);
        }
        transcript
    };

    loop {
        let mut messages = opening.clone();
        if !stitched.is_empty() {
            messages.push(ChatMessage {
                role: Role::Assistant,
                content: stitched.clone(),
            });
        }
        let request = ReasonerRequest {
            messages,
            stop: STOP_SEQUENCES.iter().map(|s| s.to_string()).collect(),
            max_tokens: cfg.max_tokens,
            temperature: cfg.temperature,
            seed: cfg.seed,
        };
        let response = reasoner.complete(&request)?;
        let chunk = normalize_chunk(&response.content);
        let base = stitched.len();
        forged.extend(chunk.match_indices("<results>").map(|(k, _)| base + k));
        stitched.push_str(&chunk);

        if chunk.ends_with("</edit>") {
            break;
        }
        let exec_open = SegmentKind::Execute.open();
        let code = match chunk
            .strip_suffix("</execute>")
            .and_then(|c| c.rfind(&exec_open).map(|k| (c, k)))
        {
            Some((c, k)) => c[k + exec_open.len()..].to_string(),
            None => break,
        };
        if outcomes.len() == cfg.max_exec_rounds {
            return Err(RolloutError::RoundLimitExceeded {
                max_exec_rounds: cfg.max_exec_rounds,
                transcript: Box::new(finish(&stitched, &forged)),
                outcomes,
            });
        }
        let outcome = ExecOutcome {
            status: executor.execute(&code, twin, cfg),
            code,
        };
        stitched.push_str("<results>");
        stitched.push_str(&outcome.results_body());
        stitched.push_str("</results>");
        outcomes.push(outcome);
    }
    Ok((finish(&stitched, &forged), outcomes))
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;
    use crate::twin::{MaskRef, ObjectInstance, SpatialProps};

    struct Scripted {
        turns: Vec<String>,
        next: Mutex<usize>,
        seen: Mutex<Vec<ReasonerRequest>>,
    }

    impl Scripted {
        fn new(turns: &[&str]) -> Self {
            Self {
                turns: turns.iter().map(|s| s.to_string()).collect(),
                next: Mutex::new(0),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl Reasoner for Scripted {
        fn complete(&self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
            self.seen.lock().unwrap().push(request.clone());
            let mut next = self.next.lock().unwrap();
            let content = self.turns[(*next).min(self.turns.len() - 1)].clone();
            *next += 1;
            Ok(ReasonerResponse { content })
        }
    }

    fn twin() -> VideoTwin {
        let inst = |id| ObjectInstance {
            id,
            category: "dog".into(),
            attributes: vec![],
            mask_ref: MaskRef::Path("m".into()),
            spatial: SpatialProps {
                x: 0.5,
                y: 0.5,
                depth: 0.5,
                size: 0.1,
            },
        };
        VideoTwin::from_frames(vec![vec![inst(0), inst(1)]])
    }

    #[test]
    fn think_then_edit() {
        let r = Scripted::new(&["<think>t</think><edit>{}</edit>"]);
        let (t, outcomes) = drive_loop(&r, &twin(), "q", &LoopConfig::default()).unwrap();
        assert!(t.complete);
        assert!(outcomes.is_empty());
        assert_eq!(r.seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn one_execute_round() {
        let r = Scripted::new(&[
            "<think>t</think><execute>count(objects(frame=0))</execute>",
            "<edit>{}</edit>",
        ]);
        let (t, outcomes) = drive_loop(&r, &twin(), "q", &LoopConfig::default()).unwrap();
        assert!(t.complete);
        assert_eq!(t.segments[2].body, "2");
        assert_eq!(outcomes.len(), 1);
        assert!(outcomes[0].is_ok());
        let seen = r.seen.lock().unwrap();
        let last = seen[1].messages.last().unwrap();
        assert_eq!(last.role, Role::Assistant);
        assert!(last.content.ends_with("<results>2</results>"));
    }

    #[test]
    fn stripped_stop_sequence_restored() {
        let r = Scripted::new(&["<think>t</think><execute>count(objects(0))", "<edit>{}"]);
        let (t, outcomes) = drive_loop(&r, &twin(), "q", &LoopConfig::default()).unwrap();
        assert!(t.complete, "{t:?}");
        assert_eq!(outcomes.len(), 1);
    }

    #[test]
    fn text_after_stop_is_dropped() {
        let r = Scripted::new(&["<think>t</think><edit>{}</edit> trailing"]);
        let (t, _) = drive_loop(&r, &twin(), "q", &LoopConfig::default()).unwrap();
        assert!(t.complete);
        assert!(!t.source.contains("trailing"));
    }

    #[test]
    fn round_limit() {
        let r = Scripted::new(&["<think>t</think><execute>1</execute>", "<execute>2</execute>"]);
        let cfg = LoopConfig {
            max_exec_rounds: 3,
            ..LoopConfig::default()
        };
        match drive_loop(&r, &twin(), "q", &cfg) {
            Err(RolloutError::RoundLimitExceeded {
                transcript, outcomes, ..
            }) => {
                assert_eq!(outcomes.len(), 3);
                assert!(!transcript.complete);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn failed_execution_is_reported_in_results() {
        let r = Scripted::new(&["<think>t</think><execute>objects(frame=9)</execute>", "<edit>{}</edit>"]);
        let (t, outcomes) = drive_loop(&r, &twin(), "q", &LoopConfig::default()).unwrap();
        assert!(!outcomes[0].is_ok());
        assert!(t.segments[2].body.starts_with("error (frame_out_of_range)"));
        assert!(t.complete);
    }

    #[test]
    fn forged_results_are_stray() {
        let r = Scripted::new(&[
            "<think>t</think><execute>1</execute>",
            "<results>9</results><edit>{}</edit>",
        ]);
        let (t, _) = drive_loop(&r, &twin(), "q", &LoopConfig::default()).unwrap();
        assert!(!t.complete);
        assert!(t
            .issues
            .iter()
            .any(|i| matches!(i, crate::rollout::ParseIssue::StrayText { .. })));
    }

    #[test]
    fn turn_without_blocks_stops() {
        let r = Scripted::new(&["<think>only thinking</think>"]);
        let (t, outcomes) = drive_loop(&r, &twin(), "q", &LoopConfig::default()).unwrap();
        assert!(!t.complete);
        assert!(outcomes.is_empty());
        assert_eq!(extract_edit(&t), Err(RolloutError::NoEditSegment));
    }

    #[test]
    fn extract_edit_preserves_bytes() {
        let t = parse_rollout("<think>a</think><edit>\n{\"frame_count\":1}</edit>");
        assert_eq!(extract_edit(&t).unwrap(), "\n{\"frame_count\":1}");
    }

    #[test]
    fn unknown_template() {
        let r = Scripted::new(&["<think>t</think><edit>{}</edit>"]);
        let cfg = LoopConfig {
            prompt_template_id: "nope".into(),
            ..LoopConfig::default()
        };
        assert!(matches!(
            drive_loop(&r, &twin(), "q", &cfg),
            Err(RolloutError::UnknownTemplate(_))
        ));
    }
}
