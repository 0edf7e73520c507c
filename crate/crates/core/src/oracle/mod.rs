//! The single gateway for chat and embedding calls.
//!
//! Three modes: `live` talks to an OpenAI-compatible endpoint, `record` does
//! the same and appends every new exchange to a JSONL transcript, `replay`
//! answers from a transcript and never touches the network. Usage counters
//! are updated identically in all modes; in replay the recorded latency is
//! charged as thinking time, so replayed runs report identical numbers.

mod embed;
mod http;
mod request;
mod transcript;

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{bucket, cosine, fnv1a64, normalize, stub_embed, trigrams, STUB_DIM};
pub use http::HttpBackend;
pub use request::{ChatRequest, EmbedRequest, ImageUrl, Message, Part, Request, Role};
pub use transcript::{Record, Transcript};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("network error after retries: {0}")]
    Network(String),
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
}

/// Where responses come from.
pub trait Backend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<String, OracleError>;

    fn embed(&self, req: &EmbedRequest) -> Result<Vec<Vec<f32>>, OracleError> {
        let _ = req;
        Err(OracleError::Config("this backend cannot embed".into()))
    }
}

/// A backend driven by a closure, for authoring transcripts offline.
pub struct ScriptedBackend<F>(pub F);

impl<F> Backend for ScriptedBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, OracleError> + Send + Sync,
{
    fn chat(&self, req: &ChatRequest) -> Result<String, OracleError> {
        (self.0)(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    Live,
    Record,
    Replay,
}

impl FromStr for OracleMode {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, OracleError> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(Self::Live),
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            other => Err(OracleError::Config(format!("unknown oracle mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    /// Local trigram hashing; never recorded, never networked.
    Stub,
    /// The endpoint's `/v1/embeddings`, recorded like chat.
    Remote,
}

impl FromStr for EmbedderKind {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, OracleError> {
        match s.to_ascii_lowercase().as_str() {
            "stub" => Ok(Self::Stub),
            "remote" => Ok(Self::Remote),
            other => Err(OracleError::Config(format!("unknown embedder `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub mode: OracleMode,
    pub base_url: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub model: String,
    pub embed_model: String,
    pub embedder: EmbedderKind,
    pub parallelism: usize,
    pub timeout_s: f64,
    pub transcript: Option<PathBuf>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            mode: OracleMode::Replay,
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            model: "gpt-4.1".into(),
            embed_model: "text-embedding-3-small".into(),
            embedder: EmbedderKind::Stub,
            parallelism: 4,
            timeout_s: 120.0,
            transcript: None,
        }
    }
}

impl OracleConfig {
    /// Applies `ORACLE_*` environment variables on top of `self`.
    pub fn with_env(mut self) -> Result<Self, OracleError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(v) = var("ORACLE_BASE_URL") {
            self.base_url = v;
        }
        if let Some(v) = var("ORACLE_API_KEY") {
            self.api_key = Some(v);
        }
        if let Some(v) = var("ORACLE_MODE") {
            self.mode = v.parse()?;
        }
        if let Some(v) = var("ORACLE_MODEL") {
            self.model = v;
        }
        if let Some(v) = var("ORACLE_EMBED_MODEL") {
            self.embed_model = v;
        }
        Ok(self)
    }
}

/// Snapshot of usage counters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub n_calls: u64,
    pub n_chat: u64,
    pub n_embed: u64,
    /// Seconds spent waiting on the model (recorded latency in replay).
    pub thinking_time: f64,
}

#[derive(Debug, Default)]
struct UsageCounters {
    n_chat: AtomicU64,
    n_embed: AtomicU64,
    micros: AtomicU64,
}

impl UsageCounters {
    fn add(&self, kind: CallKind, latency_s: f64) {
        match kind {
            CallKind::Chat => self.n_chat.fetch_add(1, Ordering::SeqCst),
            CallKind::Embed => self.n_embed.fetch_add(1, Ordering::SeqCst),
        };
        self.micros.fetch_add((latency_s * 1e6).round() as u64, Ordering::SeqCst);
    }

    fn snapshot(&self) -> Usage {
        let n_chat = self.n_chat.load(Ordering::SeqCst);
        let n_embed = self.n_embed.load(Ordering::SeqCst);
        Usage {
            n_calls: n_chat + n_embed,
            n_chat,
            n_embed,
            thinking_time: self.micros.load(Ordering::SeqCst) as f64 / 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Chat,
    Embed,
}

/// One entry of the per-scope call log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallEntry {
    pub stage: String,
    pub kind: CallKind,
    pub digest: String,
    pub latency_s: f64,
    /// Served from the transcript rather than the backend.
    pub cached: bool,
}

/// Counting semaphore bounding in-flight backend calls.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct GateGuard<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        GateGuard(self)
    }
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

struct Shared {
    mode: OracleMode,
    model: String,
    embed_model: String,
    embedder: EmbedderKind,
    backend: Option<Box<dyn Backend>>,
    transcript: Mutex<Transcript>,
    gate: Gate,
    total: UsageCounters,
}

/// Cheap to clone. Clones share the transcript, the backend and the
/// counters; [`Oracle::scoped`] starts fresh counters for one task.
#[derive(Clone)]
pub struct Oracle {
    shared: Arc<Shared>,
    counters: Arc<UsageCounters>,
    log: Arc<Mutex<Vec<CallEntry>>>,
    stage: Arc<str>,
}

impl std::fmt::Debug for Oracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Oracle")
            .field("mode", &self.shared.mode)
            .field("model", &self.shared.model)
            .field("stage", &self.stage)
            .finish_non_exhaustive()
    }
}

impl Oracle {
    /// Builds an oracle from configuration. Live and record modes talk HTTP;
    /// replay needs `transcript` to exist; record appends to it.
    pub fn new(cfg: &OracleConfig) -> Result<Self, OracleError> {
        let backend: Option<Box<dyn Backend>> = match cfg.mode {
            OracleMode::Replay => None,
            OracleMode::Live | OracleMode::Record => Some(Box::new(HttpBackend::new(
                cfg.base_url.clone(),
                cfg.api_key.clone(),
                Duration::from_secs_f64(cfg.timeout_s),
            ))),
        };
        let transcript = Self::open_transcript(cfg)?;
        Ok(Self::assemble(cfg, backend, transcript))
    }

    /// Like [`Oracle::new`] but with a caller-supplied backend.
    pub fn with_backend(cfg: &OracleConfig, backend: Box<dyn Backend>) -> Result<Self, OracleError> {
        let transcript = Self::open_transcript(cfg)?;
        Ok(Self::assemble(cfg, Some(backend), transcript))
    }

    /// A replay oracle over an in-memory transcript.
    pub fn replay(transcript: Transcript) -> Self {
        Self::assemble(&OracleConfig::default(), None, transcript)
    }

    fn open_transcript(cfg: &OracleConfig) -> Result<Transcript, OracleError> {
        match (&cfg.transcript, cfg.mode) {
            (Some(p), OracleMode::Replay) => Transcript::load(p),
            (Some(p), _) => Transcript::open_append(p),
            (None, OracleMode::Replay) => Err(OracleError::Config("replay mode needs a transcript".into())),
            (None, _) => Ok(Transcript::new()),
        }
    }

    fn assemble(cfg: &OracleConfig, backend: Option<Box<dyn Backend>>, transcript: Transcript) -> Self {
        Self {
            shared: Arc::new(Shared {
                mode: cfg.mode,
                model: cfg.model.clone(),
                embed_model: cfg.embed_model.clone(),
                embedder: cfg.embedder,
                backend,
                transcript: Mutex::new(transcript),
                gate: Gate::new(cfg.parallelism),
                total: UsageCounters::default(),
            }),
            counters: Arc::default(),
            log: Arc::default(),
            stage: Arc::from(""),
        }
    }

    pub fn mode(&self) -> OracleMode {
        self.shared.mode
    }

    pub fn model(&self) -> &str {
        &self.shared.model
    }

    /// An empty chat request for the configured model.
    pub fn request(&self) -> ChatRequest {
        ChatRequest::new(self.shared.model.clone())
    }

    /// Same backend and transcript, fresh counters and call log.
    pub fn scoped(&self) -> Self {
        Self {
            counters: Arc::default(),
            log: Arc::default(),
            ..self.clone()
        }
    }

    /// Same counters, with calls logged under `stage`.
    pub fn stage(&self, stage: &str) -> Self {
        Self {
            stage: Arc::from(stage),
            ..self.clone()
        }
    }

    /// Counters for this scope.
    pub fn usage(&self) -> Usage {
        self.counters.snapshot()
    }

    /// Counters across every scope sharing this oracle.
    pub fn total_usage(&self) -> Usage {
        self.shared.total.snapshot()
    }

    pub fn calls(&self) -> Vec<CallEntry> {
        self.log.lock().unwrap().clone()
    }

    pub fn transcript_len(&self) -> usize {
        self.shared.transcript.lock().unwrap().len()
    }

    fn account(&self, kind: CallKind, digest: String, latency_s: f64, cached: bool) {
        self.counters.add(kind, latency_s);
        self.shared.total.add(kind, latency_s);
        self.log.lock().unwrap().push(CallEntry {
            stage: self.stage.to_string(),
            kind,
            digest,
            latency_s,
            cached,
        });
    }

    /// Looks the request up in the transcript, or asks the backend (and
    /// records the answer when recording).
    fn exchange(
        &self,
        req: &Request,
        call: impl FnOnce(&dyn Backend) -> Result<serde_json::Value, OracleError>,
    ) -> Result<(serde_json::Value, String, f64, bool), OracleError> {
        let digest = req.digest();
        let hit = self
            .shared
            .transcript
            .lock()
            .unwrap()
            .get(&digest)
            .map(|r| (r.response.clone(), r.latency_s));
        match (self.shared.mode, hit) {
            (OracleMode::Replay | OracleMode::Record, Some((resp, lat))) => return Ok((resp, digest, lat, true)),
            (OracleMode::Replay, None) => return Err(OracleError::ReplayMiss(digest)),
            _ => {}
        }
        let backend = self
            .shared
            .backend
            .as_deref()
            .ok_or_else(|| OracleError::Config("no backend configured".into()))?;
        let start = Instant::now();
        let resp = {
            let _slot = self.shared.gate.acquire();
            call(backend)?
        };
        let latency = start.elapsed().as_secs_f64();
        if self.shared.mode == OracleMode::Record {
            self.shared.transcript.lock().unwrap().append(Record {
                digest: digest.clone(),
                request: req.abbreviated(),
                response: resp.clone(),
                latency_s: latency,
            })?;
        }
        Ok((resp, digest, latency, false))
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<String, OracleError> {
        let wrapped = Request::Chat(req.clone());
        let (resp, digest, latency, cached) =
            self.exchange(&wrapped, |b| b.chat(req).map(serde_json::Value::String))?;
        let text = resp
            .as_str()
            .ok_or_else(|| OracleError::Transcript(format!("record {digest} is not a chat response")))?
            .to_string();
        log::debug!("chat[{}] {} -> {} chars", self.stage, &digest[..12], text.len());
        self.account(CallKind::Chat, digest, latency, cached);
        Ok(text)
    }

    /// Unit-norm embeddings, one per input.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, OracleError> {
        let req = EmbedRequest {
            model: self.shared.embed_model.clone(),
            input: texts.to_vec(),
        };
        if self.shared.embedder == EmbedderKind::Stub {
            let digest = Request::Embed(req).digest();
            self.account(CallKind::Embed, digest, 0.0, false);
            return Ok(texts.iter().map(|t| stub_embed(t)).collect());
        }
        let wrapped = Request::Embed(req.clone());
        let (resp, digest, latency, cached) = self.exchange(&wrapped, |b| {
            let v = b.embed(&req)?;
            serde_json::to_value(v).map_err(|e| OracleError::Malformed(e.to_string()))
        })?;
        let mut vecs: Vec<Vec<f32>> = serde_json::from_value(resp)
            .map_err(|e| OracleError::Transcript(format!("record {digest}: {e}")))?;
        vecs.iter_mut().for_each(|v| normalize(v));
        self.account(CallKind::Embed, digest, latency, cached);
        Ok(vecs)
    }
}
