//! Model-service client contracts and their JSON-over-HTTP adapters.
//!
//! | service    | request                                                    | response                         |
//! |------------|------------------------------------------------------------|----------------------------------|
//! | reasoner   | `{"messages","stop","max_tokens","temperature","seed"}`    | `{"content"}`                    |
//! | perception | `{"frames":[b64],"labels_hint":[str]}`                     | `{"frames":[{"instances":[..]}]}`|
//! | editor     | `{"frames":[b64],"descriptions":[str],"guidance":[..]}`    | `{"frames":[b64]}`               |
//! | embedding  | `{"kind":"image"\|"text","payload":str}`                   | `{"vector":[num]}`               |
//! | detection  | `{"image":b64,"labels":[str]}`                             | `{"detections":[..]}`            |
//! | judge      | `{"query","frames_original":[b64],"frames_edited":[b64]}`  | `{"correct","rationale"}`        |
//! | quality    | `{"image":b64}`                                            | `{"score":num}`                  |
//!
//! Frames travel as base64 PNG.

use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use river_core::mask::RleMask;
use river_core::metrics::Detection;
use river_core::reward::JudgeVerdict;
use river_core::rollout::{Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse};
use river_core::twin::SpatialProps;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{Endpoint, ModelEndpoints};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("{0} endpoint is not configured")]
    NotConfigured(&'static str),
    #[error("{service} unreachable: {message}")]
    Unreachable { service: &'static str, message: String },
    #[error("{service} returned a malformed response: {message}")]
    BadResponse { service: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionRequest {
    pub frames: Vec<String>,
    pub labels_hint: Vec<String>,
}

/// Returns the raw response; the twin builder validates it.
pub trait PerceptionClient: Send + Sync {
    fn perceive(&self, request: &PerceptionRequest) -> Result<Value, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireGuidance {
    pub frame: usize,
    pub id: u64,
    pub mask: RleMask,
    pub spatial: SpatialProps,
    pub removed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditorRequest {
    pub frames: Vec<String>,
    pub descriptions: Vec<String>,
    pub guidance: Vec<WireGuidance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditorResponse {
    pub frames: Vec<String>,
}

pub trait EditorClient: Send + Sync {
    fn edit(&self, request: &EditorRequest) -> Result<EditorResponse, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Image,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub kind: EmbeddingKind,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub vector: Vec<f64>,
}

pub trait EmbeddingClient: Send + Sync {
    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<f64>, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRequest {
    pub image: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResponse {
    pub detections: Vec<Detection>,
}

pub trait DetectionClient: Send + Sync {
    fn detect(&self, request: &DetectionRequest) -> Result<Vec<Detection>, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub query: String,
    pub frames_original: Vec<String>,
    pub frames_edited: Vec<String>,
}

pub trait JudgeClient: Send + Sync {
    fn judge(&self, request: &JudgeRequest) -> Result<JudgeVerdict, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRequest {
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityResponse {
    pub score: f64,
}

pub trait QualityClient: Send + Sync {
    fn score(&self, request: &QualityRequest) -> Result<f64, ClientError>;
}

/// One JSON-over-HTTP endpoint. Every client trait is implemented on it; the
/// caller decides which service the URL speaks.
#[derive(Debug, Clone)]
pub struct HttpService {
    service: &'static str,
    url: String,
    retries: u32,
    client: Client,
}

impl HttpService {
    pub fn new(service: &'static str, endpoint: &Endpoint) -> Result<Self, ClientError> {
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs.max(0.001)))
            .build()
            .map_err(|e| ClientError::Unreachable {
                service,
                message: e.to_string(),
            })?;
        Ok(Self {
            service,
            url: endpoint.url.clone(),
            retries: endpoint.retries,
            client,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// POSTs `body`, retrying on transport errors and 5xx statuses.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, ClientError> {
        let unreachable = |message: String| ClientError::Unreachable {
            service: self.service,
            message,
        };
        let bad = |message: String| ClientError::BadResponse {
            service: self.service,
            message,
        };
        let mut last = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                log::debug!("{} retry {attempt} after {:?}", self.service, last);
            }
            let response = match self.client.post(&self.url).json(body).send() {
                Ok(r) => r,
                Err(e) => {
                    last = Some(unreachable(e.to_string()));
                    continue;
                }
            };
            let status = response.status();
            if status.is_server_error() {
                last = Some(unreachable(format!("HTTP {status}")));
                continue;
            }
            if !status.is_success() {
                return Err(bad(format!("HTTP {status}")));
            }
            let text = response.text().map_err(|e| unreachable(e.to_string()))?;
            return serde_json::from_str(&text).map_err(|e| bad(e.to_string()));
        }
        Err(last.unwrap_or_else(|| unreachable("no attempt made".into())))
    }
}

impl Reasoner for HttpService {
    fn complete(&self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        self.post(request).map_err(|e| match e {
            ClientError::BadResponse { message, .. } => ReasonerError::BadResponse(message),
            other => ReasonerError::Unreachable(other.to_string()),
        })
    }
}

impl PerceptionClient for HttpService {
    fn perceive(&self, request: &PerceptionRequest) -> Result<Value, ClientError> {
        self.post(request)
    }
}

impl EditorClient for HttpService {
    fn edit(&self, request: &EditorRequest) -> Result<EditorResponse, ClientError> {
        self.post(request)
    }
}

impl EmbeddingClient for HttpService {
    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<f64>, ClientError> {
        self.post::<_, EmbeddingResponse>(request).map(|r| r.vector)
    }
}

impl DetectionClient for HttpService {
    fn detect(&self, request: &DetectionRequest) -> Result<Vec<Detection>, ClientError> {
        self.post::<_, DetectionResponse>(request).map(|r| r.detections)
    }
}

impl JudgeClient for HttpService {
    fn judge(&self, request: &JudgeRequest) -> Result<JudgeVerdict, ClientError> {
        self.post(request)
    }
}

impl QualityClient for HttpService {
    fn score(&self, request: &QualityRequest) -> Result<f64, ClientError> {
        self.post::<_, QualityResponse>(request).map(|r| r.score)
    }
}

pub type SharedReasoner = Arc<dyn Reasoner + Send + Sync>;

/// The set of services one pipeline run may call. Absent services disable
/// the stages and metrics that need them.
#[derive(Default)]
pub struct Services {
    pub reasoner: Option<SharedReasoner>,
    pub perception: Option<Arc<dyn PerceptionClient>>,
    pub editor: Option<Arc<dyn EditorClient>>,
    pub embedding: Option<Arc<dyn EmbeddingClient>>,
    pub detection: Option<Arc<dyn DetectionClient>>,
    pub judge: Option<Arc<dyn JudgeClient>>,
    pub quality: Option<Arc<dyn QualityClient>>,
}

impl Services {
    pub fn from_endpoints(endpoints: &ModelEndpoints) -> Result<Self, ClientError> {
        fn http(service: &'static str, ep: &Option<Endpoint>) -> Result<Option<HttpService>, ClientError> {
            ep.as_ref().map(|e| HttpService::new(service, e)).transpose()
        }
        Ok(Self {
            reasoner: http("reasoner", &endpoints.reasoner)?.map(|s| Arc::new(s) as SharedReasoner),
            perception: http("perception", &endpoints.perception)?.map(|s| Arc::new(s) as _),
            editor: http("editor", &endpoints.editor)?.map(|s| Arc::new(s) as _),
            embedding: http("embedding", &endpoints.embedding)?.map(|s| Arc::new(s) as _),
            detection: http("detection", &endpoints.detection)?.map(|s| Arc::new(s) as _),
            judge: http("judge", &endpoints.judge)?.map(|s| Arc::new(s) as _),
            quality: http("quality", &endpoints.quality)?.map(|s| Arc::new(s) as _),
        })
    }

    pub fn reasoner(&self) -> Result<&(dyn Reasoner + Send + Sync), ClientError> {
        self.reasoner.as_deref().ok_or(ClientError::NotConfigured("reasoner"))
    }
}
