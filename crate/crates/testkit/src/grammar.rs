//! Regular-expression oracle for rollout segment sequences.

use regex::Regex;
use river_core::rollout::SegmentKind;

fn letter(kind: SegmentKind) -> char {
    match kind {
        SegmentKind::Think => 'T',
        SegmentKind::Execute => 'X',
        SegmentKind::Results => 'R',
        SegmentKind::Edit => 'E',
    }
}

pub struct GrammarOracle {
    re: Regex,
}

impl Default for GrammarOracle {
    fn default() -> Self {
        Self {
            re: Regex::new("^T(XR)*E$").expect("static pattern"),
        }
    }
}

impl GrammarOracle {
    pub fn accepts(&self, kinds: &[SegmentKind]) -> bool {
        let word: String = kinds.iter().map(|&k| letter(k)).collect();
        self.re.is_match(&word)
    }
}

/// Every kind sequence of length `0..=max_len`.
pub fn all_sequences(max_len: usize) -> Vec<Vec<SegmentKind>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for seq in &frontier {
            for kind in SegmentKind::ALL {
                let mut s: Vec<SegmentKind> = seq.clone();
                s.push(kind);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Renders a kind sequence as delimited text with the given bodies.
pub fn render(kinds: &[SegmentKind], body: impl Fn(usize) -> String) -> String {
    kinds
        .iter()
        .enumerate()
        .map(|(k, kind)| format!("<{0}>{1}</{0}>", kind.tag(), body(k)))
        .collect()
}
