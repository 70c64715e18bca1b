//! The reasoner output protocol.
//!
//! A rollout is `<think>` followed by any number of `<execute>`/`<results>`
//! rounds and a closing `<edit>` carrying the edited twin. Only whitespace
//! may appear between segments.

mod driver;
mod parse;

pub use driver::{
    drive_loop, drive_loop_with, extract_edit, prompt_messages, ChatMessage, CodeExecutor, ExecOutcome, ExecStatus,
    LoopConfig, Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse, Role, RolloutError, TwinqlExecutor,
    DEFAULT_TEMPLATE, STOP_SEQUENCES,
};
pub use parse::{
    parse_rollout, validate_kinds, validate_sequence, ParseIssue, RolloutTranscript, Segment, SegmentKind,
};
