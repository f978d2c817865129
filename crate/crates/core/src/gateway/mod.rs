//! Uniform client for completion and embedding providers.
//!
//! Three modes share one request type:
//! - `live`: OpenAI-compatible HTTP endpoint, optionally recording every
//!   exchange into a [`FixtureFile`];
//! - `replay`: answers strictly from a fixture file, never touching a transport;
//! - `stub`: deterministic rule-based answers per [`Role`].

mod fixture;
mod ratelimit;
mod stub;
mod transport;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

pub use fixture::{record_session, FixtureEntry, FixtureError, FixtureFile};
pub use ratelimit::TokenBucket;
pub use transport::{HttpResponse, Transport, TransportError, UreqTransport};

pub const API_KEY_ENV: &str = "TOOLWEAVE_API_KEY";
pub const ENDPOINT_ENV: &str = "TOOLWEAVE_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Propose,
    Judge,
    Generate,
    PlanJudge,
    Embed,
    Extract,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Propose => "propose",
            Role::Judge => "judge",
            Role::Generate => "generate",
            Role::PlanJudge => "plan_judge",
            Role::Embed => "embed",
            Role::Extract => "extract",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayRequest {
    pub role: Role,
    pub payload: String,
}

impl GatewayRequest {
    pub fn new(role: Role, payload: impl Into<String>) -> Self {
        Self {
            role,
            payload: payload.into(),
        }
    }

    /// Hex SHA-256 over `role`, a NUL separator and the payload bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.role.as_str().as_bytes());
        h.update([0u8]);
        h.update(self.payload.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Replay,
    Stub,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(Mode::Live),
            "replay" => Ok(Mode::Replay),
            "stub" => Ok(Mode::Stub),
            other => Err(format!(
                "unknown mode {other:?} (expected live, replay or stub)"
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Replay => "replay",
            Mode::Stub => "stub",
        })
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no fixture for {role} request {fingerprint}")]
    MissingFixture { role: Role, fingerprint: String },
    #[error("provider returned HTTP {status}: {body}")]
    ProviderHttp { status: u16, body: String },
    #[error("provider request timed out")]
    Timeout,
    #[error(transparent)]
    Transport(TransportError),
    #[error("live mode requires an API key ({API_KEY_ENV})")]
    MissingCredentials,
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
    #[error("stub cannot answer {role} request: {reason}")]
    Stub { role: Role, reason: String },
}

impl GatewayError {
    fn retryable(&self) -> bool {
        match self {
            GatewayError::Timeout | GatewayError::Transport(_) => true,
            GatewayError::ProviderHttp { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveConfig {
    /// Base URL; `/chat/completions` and `/embeddings` are appended.
    pub endpoint: String,
    pub model: String,
    pub embed_model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub requests_per_second: f64,
    pub max_attempts: u32,
    pub backoff_base: Duration,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8080/v1".into(),
            model: "default".into(),
            embed_model: "default-embedding".into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            requests_per_second: 5.0,
            max_attempts: 3,
            backoff_base: Duration::from_secs(1),
        }
    }
}

impl LiveConfig {
    /// Applies `TOOLWEAVE_API_KEY` / `TOOLWEAVE_ENDPOINT` when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
        if let Ok(ep) = std::env::var(ENDPOINT_ENV) {
            if !ep.is_empty() {
                self.endpoint = ep;
            }
        }
        self
    }
}

enum Backend {
    Live {
        config: LiveConfig,
        transport: Arc<dyn Transport>,
        limiter: TokenBucket,
    },
    Replay {
        fixtures: FixtureFile,
    },
    Stub,
}

/// Shareable across threads; all interior state is synchronized.
pub struct Gateway {
    backend: Backend,
    recorder: Option<Mutex<FixtureFile>>,
    calls: AtomicUsize,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode())
            .field("calls", &self.call_count())
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
}

impl Gateway {
    pub fn stub() -> Self {
        Self {
            backend: Backend::Stub,
            recorder: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn replay(fixtures: FixtureFile) -> Self {
        Self {
            backend: Backend::Replay { fixtures },
            recorder: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn live(config: LiveConfig, transport: Arc<dyn Transport>) -> Result<Self, GatewayError> {
        if config.api_key.is_none() {
            return Err(GatewayError::MissingCredentials);
        }
        let limiter = TokenBucket::new(config.requests_per_second);
        Ok(Self {
            backend: Backend::Live {
                config,
                transport,
                limiter,
            },
            recorder: None,
            calls: AtomicUsize::new(0),
        })
    }

    /// Records every live exchange; retrieve with [`Gateway::recorded`].
    pub fn with_recording(mut self) -> Self {
        self.recorder = Some(Mutex::new(FixtureFile::new()));
        self
    }

    pub fn mode(&self) -> Mode {
        match self.backend {
            Backend::Live { .. } => Mode::Live,
            Backend::Replay { .. } => Mode::Replay,
            Backend::Stub => Mode::Stub,
        }
    }

    /// Number of `complete`/`embed` requests served (embedding batches count per text).
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn recorded(&self) -> Option<FixtureFile> {
        self.recorder
            .as_ref()
            .map(|r| r.lock().expect("recorder lock").clone())
    }

    pub fn complete(&self, request: &GatewayRequest) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match &self.backend {
            Backend::Stub => stub::respond(request),
            Backend::Replay { fixtures } => lookup(fixtures, request),
            Backend::Live {
                config,
                transport,
                limiter,
            } => {
                let body = serde_json::json!({
                    "model": config.model,
                    "temperature": 0,
                    "messages": [{"role": "user", "content": request.payload}],
                    "metadata": {"toolweave_role": request.role.as_str()},
                })
                .to_string();
                let url = format!("{}/chat/completions", config.endpoint.trim_end_matches('/'));
                let raw = with_retries(config, || {
                    limiter.acquire();
                    post(transport.as_ref(), config, &url, &body)
                })?;
                let parsed: ChatResponse = serde_json::from_str(&raw)
                    .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
                let text = parsed
                    .choices
                    .into_iter()
                    .next()
                    .map(|c| c.message.content)
                    .ok_or_else(|| GatewayError::BadResponse("no choices".into()))?;
                self.record(request, &text, Some(&config.model));
                Ok(text)
            }
        }
    }

    /// Embeds a batch of texts. Vectors are returned as produced by the
    /// provider; callers normalize.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        self.calls.fetch_add(texts.len(), Ordering::Relaxed);
        match &self.backend {
            Backend::Stub => Ok(texts
                .iter()
                .map(|t| crate::retrieval::stub_embedding(t))
                .collect()),
            Backend::Replay { fixtures } => texts
                .iter()
                .map(|t| {
                    let raw = lookup(fixtures, &GatewayRequest::new(Role::Embed, t.as_str()))?;
                    serde_json::from_str(&raw)
                        .map_err(|e| GatewayError::BadResponse(format!("embedding fixture: {e}")))
                })
                .collect(),
            Backend::Live {
                config,
                transport,
                limiter,
            } => {
                if texts.is_empty() {
                    return Ok(Vec::new());
                }
                let body =
                    serde_json::json!({"model": config.embed_model, "input": texts}).to_string();
                let url = format!("{}/embeddings", config.endpoint.trim_end_matches('/'));
                let raw = with_retries(config, || {
                    limiter.acquire();
                    post(transport.as_ref(), config, &url, &body)
                })?;
                let parsed: EmbeddingResponse = serde_json::from_str(&raw)
                    .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
                if parsed.data.len() != texts.len() {
                    return Err(GatewayError::BadResponse(format!(
                        "{} embeddings for {} inputs",
                        parsed.data.len(),
                        texts.len()
                    )));
                }
                let vectors: Vec<Vec<f32>> = parsed.data.into_iter().map(|d| d.embedding).collect();
                for (t, v) in texts.iter().zip(&vectors) {
                    let text = serde_json::to_string(v).expect("floats serialize");
                    self.record(
                        &GatewayRequest::new(Role::Embed, t.as_str()),
                        &text,
                        Some(&config.embed_model),
                    );
                }
                Ok(vectors)
            }
        }
    }

    fn record(&self, request: &GatewayRequest, response: &str, model: Option<&str>) {
        if let Some(rec) = &self.recorder {
            let entry = FixtureEntry {
                fingerprint: request.fingerprint(),
                role: request.role,
                response: response.to_string(),
                model: model.map(str::to_string),
                recorded_at: None,
            };
            if let Err(e) = rec.lock().expect("recorder lock").insert(entry) {
                warn!("not recording exchange: {e}");
            }
        }
    }
}

fn lookup(fixtures: &FixtureFile, request: &GatewayRequest) -> Result<String, GatewayError> {
    let fingerprint = request.fingerprint();
    match fixtures.get(&fingerprint) {
        Some(entry) if entry.role == request.role => Ok(entry.response.clone()),
        _ => Err(GatewayError::MissingFixture {
            role: request.role,
            fingerprint,
        }),
    }
}

fn post(
    transport: &dyn Transport,
    config: &LiveConfig,
    url: &str,
    body: &str,
) -> Result<String, GatewayError> {
    let resp = transport
        .post_json(url, config.api_key.as_deref(), body, config.timeout)
        .map_err(|e| match e {
            TransportError::Timeout => GatewayError::Timeout,
            other => GatewayError::Transport(other),
        })?;
    if (200..300).contains(&resp.status) {
        Ok(resp.body)
    } else {
        Err(GatewayError::ProviderHttp {
            status: resp.status,
            body: resp.body,
        })
    }
}

fn with_retries<T>(
    config: &LiveConfig,
    mut call: impl FnMut() -> Result<T, GatewayError>,
) -> Result<T, GatewayError> {
    let attempts = config.max_attempts.max(1);
    let mut delay = config.backoff_base;
    for attempt in 1..=attempts {
        match call() {
            Ok(v) => return Ok(v),
            Err(e) if e.retryable() && attempt < attempts => {
                debug!(attempt, "retrying provider call after {e}");
                std::thread::sleep(delay);
                delay *= 2;
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on the final attempt")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counts calls and replays a scripted sequence of responses.
    struct ScriptedTransport {
        calls: AtomicUsize,
        script: Mutex<Vec<Result<HttpResponse, TransportError>>>,
    }

    impl ScriptedTransport {
        fn new(mut script: Vec<Result<HttpResponse, TransportError>>) -> Self {
            script.reverse();
            Self {
                calls: AtomicUsize::new(0),
                script: Mutex::new(script),
            }
        }
    }

    impl Transport for ScriptedTransport {
        fn post_json(
            &self,
            _url: &str,
            _bearer: Option<&str>,
            _body: &str,
            _timeout: Duration,
        ) -> Result<HttpResponse, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.script.lock().unwrap().pop().expect("script exhausted")
        }
    }

    fn chat(text: &str) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: 200,
            body: serde_json::json!({"choices": [{"message": {"content": text}}]}).to_string(),
        })
    }

    fn fast_config() -> LiveConfig {
        LiveConfig {
            api_key: Some("k".into()),
            backoff_base: Duration::from_millis(1),
            requests_per_second: 1000.0,
            ..LiveConfig::default()
        }
    }

    #[test]
    fn fingerprint_is_stable() {
        let r = GatewayRequest::new(Role::Judge, "payload");
        assert_eq!(
            r.fingerprint(),
            GatewayRequest::new(Role::Judge, "payload").fingerprint()
        );
        assert_ne!(
            r.fingerprint(),
            GatewayRequest::new(Role::Propose, "payload").fingerprint()
        );
        assert_eq!(r.fingerprint().len(), 64);
    }

    #[test]
    fn replay_known_and_unknown() {
        let req = GatewayRequest::new(Role::Generate, "{}");
        let mut f = FixtureFile::new();
        f.insert_response(&req, "recorded text").unwrap();
        let gw = Gateway::replay(f);
        assert_eq!(gw.complete(&req).unwrap(), "recorded text");
        let other = GatewayRequest::new(Role::Generate, "{ }");
        assert!(matches!(
            gw.complete(&other),
            Err(GatewayError::MissingFixture { .. })
        ));
    }

    #[test]
    fn live_requires_credentials() {
        let t = Arc::new(ScriptedTransport::new(vec![]));
        assert!(matches!(
            Gateway::live(LiveConfig::default(), t),
            Err(GatewayError::MissingCredentials)
        ));
    }

    #[test]
    fn live_retries_then_succeeds_and_records() {
        let t = Arc::new(ScriptedTransport::new(vec![
            Err(TransportError::Timeout),
            Ok(HttpResponse {
                status: 503,
                body: "busy".into(),
            }),
            chat("accept"),
        ]));
        let gw = Gateway::live(fast_config(), t.clone())
            .unwrap()
            .with_recording();
        let req = GatewayRequest::new(Role::Judge, "candidate");
        assert_eq!(gw.complete(&req).unwrap(), "accept");
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);

        let fixtures = gw.recorded().unwrap();
        let replayed = Gateway::replay(fixtures);
        assert_eq!(replayed.complete(&req).unwrap(), "accept");
    }

    #[test]
    fn live_gives_up_after_three_attempts() {
        let t = Arc::new(ScriptedTransport::new(vec![
            Err(TransportError::Timeout),
            Err(TransportError::Timeout),
            Err(TransportError::Timeout),
        ]));
        let gw = Gateway::live(fast_config(), t.clone()).unwrap();
        assert!(matches!(
            gw.complete(&GatewayRequest::new(Role::Judge, "x")),
            Err(GatewayError::Timeout)
        ));
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let t = Arc::new(ScriptedTransport::new(vec![Ok(HttpResponse {
            status: 400,
            body: "bad".into(),
        })]));
        let gw = Gateway::live(fast_config(), t.clone()).unwrap();
        match gw.complete(&GatewayRequest::new(Role::Judge, "x")) {
            Err(GatewayError::ProviderHttp { status: 400, body }) => assert_eq!(body, "bad"),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn live_embeddings_record_per_text() {
        let body =
            serde_json::json!({"data": [{"embedding": [1.0, 0.0]}, {"embedding": [0.0, 0.5]}]})
                .to_string();
        let t = Arc::new(ScriptedTransport::new(vec![Ok(HttpResponse {
            status: 200,
            body,
        })]));
        let gw = Gateway::live(fast_config(), t).unwrap().with_recording();
        let texts = vec!["a".to_string(), "b".to_string()];
        let v = gw.embed(&texts).unwrap();
        assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 0.5]]);
        let replay = Gateway::replay(gw.recorded().unwrap());
        assert_eq!(replay.embed(&texts).unwrap(), v);
    }
}
