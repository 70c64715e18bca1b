use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Think,
    Execute,
    Results,
    Edit,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 4] = [
        SegmentKind::Think,
        SegmentKind::Execute,
        SegmentKind::Results,
        SegmentKind::Edit,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            SegmentKind::Think => "think",
            SegmentKind::Execute => "execute",
            SegmentKind::Results => "results",
            SegmentKind::Edit => "edit",
        }
    }

    pub fn open(self) -> String {
        format!("<{}>", self.tag())
    }

    pub fn close(self) -> String {
        format!("</{}>", self.tag())
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub body: String,
    /// Byte range of the whole segment, delimiters included.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ParseIssue {
    #[error("unclosed <{kind}> opened at byte {position}")]
    UnclosedToken { kind: SegmentKind, position: usize },
    #[error("stray text at byte {position}")]
    StrayText { position: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutTranscript {
    pub source: String,
    pub segments: Vec<Segment>,
    pub issues: Vec<ParseIssue>,
    pub complete: bool,
}

impl RolloutTranscript {
    pub fn kinds(&self) -> Vec<SegmentKind> {
        self.segments.iter().map(|s| s.kind).collect()
    }

    /// Flags the segment starting at `position` as stray and recomputes
    /// completeness.
    pub(crate) fn mark_stray(&mut self, position: usize) {
        self.issues.push(ParseIssue::StrayText { position });
        self.issues.sort_by_key(issue_position);
        self.complete = validate_sequence(self);
    }
}

fn issue_position(issue: &ParseIssue) -> usize {
    match issue {
        ParseIssue::UnclosedToken { position, .. } | ParseIssue::StrayText { position } => *position,
    }
}

fn opening_at(text: &str) -> Option<SegmentKind> {
    SegmentKind::ALL.into_iter().find(|k| text.starts_with(&k.open()))
}

fn next_opening(source: &str, from: usize) -> Option<usize> {
    source[from..]
        .match_indices('<')
        .map(|(k, _)| from + k)
        .find(|&p| opening_at(&source[p..]).is_some())
}

/// Scans `text` left to right for delimited segments. Never fails: problems
/// are reported as issues and make the transcript incomplete.
pub fn parse_rollout(text: &str) -> RolloutTranscript {
    let mut segments = Vec::new();
    let mut issues = Vec::new();
    let mut pos = 0;
    loop {
        let skipped = text[pos..].len() - text[pos..].trim_start().len();
        pos += skipped;
        if pos >= text.len() {
            break;
        }
        let Some(kind) = opening_at(&text[pos..]) else {
            issues.push(ParseIssue::StrayText { position: pos });
            let after = pos + text[pos..].chars().next().map_or(1, char::len_utf8);
            match next_opening(text, after) {
                Some(next) => {
                    pos = next;
                    continue;
                }
                None => break,
            }
        };
        let body_start = pos + kind.open().len();
        let close = kind.close();
        match text[body_start..].find(&close) {
            Some(offset) => {
                let end = body_start + offset + close.len();
                segments.push(Segment {
                    kind,
                    body: text[body_start..body_start + offset].to_string(),
                    span: (pos, end),
                });
                pos = end;
            }
            None => {
                issues.push(ParseIssue::UnclosedToken { kind, position: pos });
                break;
            }
        }
    }
    let mut transcript = RolloutTranscript {
        source: text.to_string(),
        segments,
        issues,
        complete: false,
    };
    transcript.complete = validate_sequence(&transcript);
    transcript
}

/// Membership in the regular language `Think (Execute Results)* Edit`.
pub fn validate_kinds(kinds: &[SegmentKind]) -> bool {
    use SegmentKind::*;
    let Some((&Think, rest)) = kinds.split_first() else {
        return false;
    };
    let Some((&Edit, middle)) = rest.split_last() else {
        return false;
    };
    middle.len() % 2 == 0 && middle.chunks(2).all(|pair| pair == [Execute, Results])
}

/// True when every delimiter pair is closed, nothing but whitespace sits
/// between segments, and the kinds follow the grammar.
pub fn validate_sequence(transcript: &RolloutTranscript) -> bool {
    transcript.issues.is_empty() && validate_kinds(&transcript.kinds())
}
