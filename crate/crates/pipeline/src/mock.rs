//! Deterministic in-process implementations of every service contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use river_core::mask::RleMask;
use river_core::metrics::{to_luma, Detection, FrameBuffer};
use river_core::reward::JudgeVerdict;
use river_core::rollout::{Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse, Role};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::clients::{
    ClientError, DetectionClient, DetectionRequest, EditorClient, EditorRequest, EditorResponse, EmbeddingClient,
    EmbeddingKind, EmbeddingRequest, JudgeClient, JudgeRequest, PerceptionClient, PerceptionRequest, QualityClient,
    QualityRequest, Services,
};
use crate::frames::from_base64;

pub const SCRIPT_FILE: &str = "reasoner.json";

/// Reasoner turns for one query, as stored in a video directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonerScript {
    pub query: String,
    pub turns: Vec<String>,
}

impl ReasonerScript {
    pub fn load(video_dir: &Path) -> Option<Self> {
        let text = fs::read_to_string(video_dir.join(SCRIPT_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }
}

/// Replays fixed turns per query. The turn index is the number of
/// `<results>` blocks already in the trailing assistant message.
#[derive(Debug, Default)]
pub struct ScriptedReasoner {
    scripts: BTreeMap<String, Vec<String>>,
    calls: AtomicUsize,
    unreachable: bool,
}

impl ScriptedReasoner {
    pub fn new(scripts: impl IntoIterator<Item = ReasonerScript>) -> Self {
        Self {
            scripts: scripts.into_iter().map(|s| (s.query, s.turns)).collect(),
            ..Self::default()
        }
    }

    pub fn single(query: &str, turns: Vec<String>) -> Self {
        Self::new([ReasonerScript {
            query: query.to_string(),
            turns,
        }])
    }

    /// A reasoner whose every request times out.
    pub fn unreachable() -> Self {
        Self {
            unreachable: true,
            ..Self::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn query_of(request: &ReasonerRequest) -> Option<&str> {
    let user = request.messages.iter().find(|m| m.role == Role::User)?;
    user.content.rsplit_once("\n\nQuery: ").map(|(_, q)| q)
}

impl Reasoner for ScriptedReasoner {
    fn complete(&self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.unreachable {
            return Err(ReasonerError::Unreachable("timed out".into()));
        }
        let query = query_of(request).ok_or_else(|| ReasonerError::BadResponse("request has no query".into()))?;
        let turns = self
            .scripts
            .get(query)
            .ok_or_else(|| ReasonerError::BadResponse(format!("no script for query `{query}`")))?;
        let turn = match request.messages.last() {
            Some(m) if m.role == Role::Assistant => m.content.matches("<results>").count(),
            _ => 0,
        };
        turns
            .get(turn)
            .map(|content| ReasonerResponse {
                content: content.clone(),
            })
            .ok_or_else(|| ReasonerError::BadResponse(format!("script exhausted at turn {turn}")))
    }
}

/// Named colours the colour-segmenting perception mock recognizes, with the
/// category it reports for each.
pub const PALETTE: [([u8; 3], &str, &str); 6] = [
    ([255, 0, 0], "red", "car"),
    ([0, 0, 255], "blue", "person"),
    ([0, 255, 0], "green", "tree"),
    ([255, 255, 0], "yellow", "ball"),
    ([255, 255, 255], "white", "dog"),
    ([255, 0, 255], "magenta", "bicycle"),
];

/// Segments frames by exact palette colour. Each palette entry is one
/// tracked object whose id is its palette position; depth grows towards the
/// top of the frame.
#[derive(Debug, Default)]
pub struct ColorPerception {
    calls: AtomicUsize,
}

impl ColorPerception {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn bad(service: &'static str, message: impl Into<String>) -> ClientError {
    ClientError::BadResponse {
        service,
        message: message.into(),
    }
}

impl PerceptionClient for ColorPerception {
    fn perceive(&self, request: &PerceptionRequest) -> Result<Value, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut frames = Vec::new();
        for b64 in &request.frames {
            let frame = from_base64(b64).map_err(|e| bad("perception", e.to_string()))?;
            let (w, h) = (frame.width(), frame.height());
            let mut instances = Vec::new();
            for (id, (rgb, colour, category)) in PALETTE.iter().enumerate() {
                let bits: Vec<bool> = frame.samples().chunks_exact(3).map(|p| p == rgb).collect();
                let mask = RleMask::encode(&bits, w, h).expect("bitmap matches frame");
                let Some((nx, ny)) = mask.centroid() else { continue };
                instances.push(json!({
                    "id": id,
                    "category": category,
                    "attributes": [colour],
                    "mask": mask,
                    "centroid": [nx * w as f64, ny * h as f64],
                    "depth": 1.0 - ny,
                }));
            }
            frames.push(json!({ "instances": instances }));
        }
        Ok(json!({ "frames": frames }))
    }
}

/// Returns a fixed response.
#[derive(Debug, Clone)]
pub struct CannedPerception(pub Value);

impl PerceptionClient for CannedPerception {
    fn perceive(&self, _: &PerceptionRequest) -> Result<Value, ClientError> {
        Ok(self.0.clone())
    }
}

/// Echoes the submitted frames back as the edited video.
#[derive(Debug, Default)]
pub struct EchoEditor {
    calls: AtomicUsize,
}

impl EchoEditor {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl EditorClient for EchoEditor {
    fn edit(&self, request: &EditorRequest) -> Result<EditorResponse, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(EditorResponse {
            frames: request.frames.clone(),
        })
    }
}

/// Counts calls and refuses them; tests assert the count stays zero.
#[derive(Debug, Default)]
pub struct RefusingEditor {
    calls: AtomicUsize,
}

impl RefusingEditor {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl EditorClient for RefusingEditor {
    fn edit(&self, _: &EditorRequest) -> Result<EditorResponse, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(ClientError::Unreachable {
            service: "editor",
            message: "editor must not be called".into(),
        })
    }
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub const EMBEDDING_GRID: u32 = 4;

/// Image embeddings are mean RGB over a 4×4 grid plus a constant term;
/// text embeddings are hash-derived values in [0, 1] of the same length.
#[derive(Debug, Default)]
pub struct FeatureEmbedding;

fn grid_features(frame: &FrameBuffer) -> Vec<f64> {
    let g = EMBEDDING_GRID;
    let (w, h) = (frame.width(), frame.height());
    let mut out = vec![0.0; (g * g * 3) as usize];
    let mut counts = vec![0u32; (g * g) as usize];
    for y in 0..h {
        for x in 0..w {
            let cell = ((y * g / h) * g + x * g / w) as usize;
            counts[cell] += 1;
            let base = ((y * w + x) * 3) as usize;
            for c in 0..3 {
                out[cell * 3 + c] += frame.samples()[base + c] as f64 / 255.0;
            }
        }
    }
    for (k, v) in out.iter_mut().enumerate() {
        *v /= counts[k / 3].max(1) as f64;
    }
    out.push(1.0);
    out
}

impl EmbeddingClient for FeatureEmbedding {
    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<f64>, ClientError> {
        match request.kind {
            EmbeddingKind::Image => {
                let frame = from_base64(&request.payload).map_err(|e| bad("embedding", e.to_string()))?;
                Ok(grid_features(&frame))
            }
            EmbeddingKind::Text => {
                let len = (EMBEDDING_GRID * EMBEDDING_GRID * 3 + 1) as usize;
                let mut v = Vec::with_capacity(len);
                let mut block = 0u32;
                while v.len() < len {
                    let d = digest(&[request.payload.as_bytes(), &block.to_le_bytes()]);
                    v.extend(d.iter().map(|&b| b as f64 / 255.0));
                    block += 1;
                }
                v.truncate(len);
                Ok(v)
            }
        }
    }
}

/// Reports every requested label with a hash-derived confidence.
#[derive(Debug, Default)]
pub struct HashDetection;

impl DetectionClient for HashDetection {
    fn detect(&self, request: &DetectionRequest) -> Result<Vec<Detection>, ClientError> {
        Ok(request
            .labels
            .iter()
            .map(|label| {
                let d = digest(&[label.as_bytes(), request.image.as_bytes()]);
                Detection {
                    label: label.clone(),
                    confidence: d[0] as f64 / 255.0,
                    bbox: [0.0, 0.0, 1.0, 1.0],
                }
            })
            .collect())
    }
}

/// Judges an edit correct when a hash of the query and edited frames falls
/// in the lower three quarters of its range.
#[derive(Debug, Default)]
pub struct HashJudge {
    calls: AtomicUsize,
}

impl HashJudge {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl JudgeClient for HashJudge {
    fn judge(&self, request: &JudgeRequest) -> Result<JudgeVerdict, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut parts: Vec<&[u8]> = vec![request.query.as_bytes()];
        parts.extend(request.frames_edited.iter().map(|f| f.as_bytes()));
        let d = digest(&parts);
        Ok(JudgeVerdict {
            correct: d[0] < 192,
            rationale: format!("mock digest byte {}", d[0]),
        })
    }
}

/// Scores luminance contrast: `100·σ/(σ + 32)`.
#[derive(Debug, Default)]
pub struct ContrastQuality;

impl QualityClient for ContrastQuality {
    fn score(&self, request: &QualityRequest) -> Result<f64, ClientError> {
        let frame = from_base64(&request.image).map_err(|e| bad("quality", e.to_string()))?;
        let luma = to_luma(&frame);
        let n = luma.samples().len() as f64;
        let mean = luma.samples().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = luma.samples().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        Ok(100.0 * sd / (sd + 32.0))
    }
}

impl Services {
    /// Every service mocked; the reasoner replays `scripts`.
    pub fn mock_all(scripts: impl IntoIterator<Item = ReasonerScript>) -> Self {
        Self {
            reasoner: Some(Arc::new(ScriptedReasoner::new(scripts))),
            perception: Some(Arc::new(ColorPerception::default())),
            editor: Some(Arc::new(EchoEditor::default())),
            embedding: Some(Arc::new(FeatureEmbedding)),
            detection: Some(Arc::new(HashDetection)),
            judge: Some(Arc::new(HashJudge::default())),
            quality: Some(Arc::new(ContrastQuality)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use river_core::rollout::ChatMessage;

    fn request(messages: Vec<(Role, &str)>) -> ReasonerRequest {
        ReasonerRequest {
            messages: messages
                .into_iter()
                .map(|(role, content)| ChatMessage {
                    role,
                    content: content.to_string(),
                })
                .collect(),
            stop: vec![],
            max_tokens: 10,
            temperature: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn scripted_turns_follow_results_count() {
        let r = ScriptedReasoner::single("q", vec!["a".into(), "b".into()]);
        let user = (Role::User, "Digital twin:\n{}\n\nQuery: q");
        assert_eq!(r.complete(&request(vec![user])).unwrap().content, "a");
        let cont = request(vec![user, (Role::Assistant, "a<results>1</results>")]);
        assert_eq!(r.complete(&cont).unwrap().content, "b");
        let done = request(vec![
            user,
            (Role::Assistant, "<results>1</results><results>2</results>"),
        ]);
        assert!(r.complete(&done).is_err());
        assert!(r
            .complete(&request(vec![(Role::User, "Digital twin:\n{}\n\nQuery: other")]))
            .is_err());
        assert_eq!(r.calls(), 4);
    }

    #[test]
    fn text_embeddings_are_deterministic_and_bounded() {
        let e = FeatureEmbedding;
        let req = EmbeddingRequest {
            kind: EmbeddingKind::Text,
            payload: "make it red".into(),
        };
        let a = e.embed(&req).unwrap();
        assert_eq!(a, e.embed(&req).unwrap());
        assert_eq!(a.len(), 49);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn grid_features_of_uniform_frame() {
        let f = FrameBuffer::filled(8, 8, 3, 255).unwrap();
        let v = grid_features(&f);
        assert_eq!(v.len(), 49);
        assert!(v.iter().all(|&x| x == 1.0));
    }
}
