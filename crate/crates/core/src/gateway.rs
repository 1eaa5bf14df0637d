//! Chat-completion and embedding access behind one cache.
//!
//! Requests are keyed by a SHA-256 of their canonical JSON. In `record` mode
//! every upstream answer is appended to a transcript file; in `replay` mode the
//! transcript is the only source and a miss is an error.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::context::{local_embed, EmbeddingBackend};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_output_tokens: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub decode_params: DecodeParams,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            decode_params: DecodeParams::default(),
        }
    }

    pub fn with_params(mut self, params: DecodeParams) -> Self {
        self.decode_params = params;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.user_prompt.is_empty() {
            return Err(Error::InvalidArgument("empty user prompt".into()));
        }
        if !(self.decode_params.temperature >= 0.0) || self.decode_params.max_output_tokens == 0 {
            return Err(Error::InvalidArgument("invalid decode parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub texts: Vec<String>,
    pub model_tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptMode {
    Record,
    Replay,
    #[default]
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CachedResponse {
    Text { text: String },
    Vector { vector: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub hash: String,
    pub request: serde_json::Value,
    pub response: CachedResponse,
}

/// In-memory view of a transcript.
#[derive(Debug, Clone, Default)]
pub struct GatewayTranscript {
    pub entries: HashMap<String, CachedResponse>,
    pub mode: TranscriptMode,
}

/// Transport failures are retried, everything else is surfaced at once.
#[derive(Debug)]
pub enum UpstreamError {
    Transient(String),
    Fatal(Error),
}

/// A backend that actually produces completions and vectors.
pub trait Upstream: Send + Sync {
    fn chat(&self, model: &str, req: &ChatRequest) -> Result<String, UpstreamError>;
    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, UpstreamError>;
}

/// Deterministic stand-in: chat returns a tagged digest plus the leading
/// words of the user prompt; embeddings are seeded hash projections.
#[derive(Debug, Clone)]
pub struct MockUpstream {
    pub seed: u64,
    pub dim: usize,
    pub summary_words: usize,
}

impl MockUpstream {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self {
            seed,
            dim,
            summary_words: 48,
        }
    }

    pub fn completion(&self, req: &ChatRequest) -> String {
        let digest = util::sha256_hex(format!("{}\u{0}{}", req.system_prompt, req.user_prompt));
        let summary = req
            .user_prompt
            .split_whitespace()
            .take(self.summary_words)
            .collect::<Vec<_>>()
            .join(" ");
        format!("[mock:{}] {summary}", &digest[..12])
    }
}

impl Upstream for MockUpstream {
    fn chat(&self, _model: &str, req: &ChatRequest) -> Result<String, UpstreamError> {
        Ok(self.completion(req))
    }

    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, UpstreamError> {
        texts
            .iter()
            .map(|t| local_embed(t, self.dim, self.seed).map(|v| v.values))
            .collect::<Result<_>>()
            .map_err(UpstreamError::Fatal)
    }
}

/// Client for `POST /v1/chat/completions` and `POST /v1/embeddings`.
pub struct OpenAiUpstream {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
}

impl OpenAiUpstream {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
        })
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value, UpstreamError> {
        let mut request = self.client.post(format!("{}{path}", self.base_url)).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| UpstreamError::Transient(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| UpstreamError::Transient(e.to_string()))?;
        if status.is_success() {
            return serde_json::from_str(&text).map_err(|e| {
                UpstreamError::Fatal(Error::Backend {
                    status: status.as_u16(),
                    message: format!("invalid response body: {e}"),
                })
            });
        }
        let message = serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .and_then(|v| v["error"]["message"].as_str().map(str::to_string))
            .unwrap_or(text);
        if status.as_u16() == 429 || status.is_server_error() {
            Err(UpstreamError::Transient(format!("status {}: {message}", status.as_u16())))
        } else {
            Err(UpstreamError::Fatal(Error::Backend {
                status: status.as_u16(),
                message,
            }))
        }
    }
}

fn contract(message: impl Into<String>) -> UpstreamError {
    UpstreamError::Fatal(Error::Backend {
        status: 200,
        message: message.into(),
    })
}

impl Upstream for OpenAiUpstream {
    fn chat(&self, model: &str, req: &ChatRequest) -> Result<String, UpstreamError> {
        let mut messages = Vec::new();
        if !req.system_prompt.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_prompt}));
        }
        messages.push(json!({"role": "user", "content": req.user_prompt}));
        let body = json!({
            "model": model,
            "messages": messages,
            "temperature": req.decode_params.temperature,
            "max_tokens": req.decode_params.max_output_tokens,
        });
        let value = self.post("/v1/chat/completions", &body)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| contract("missing choices[0].message.content"))
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, UpstreamError> {
        let body = json!({"model": model, "input": texts});
        let value = self.post("/v1/embeddings", &body)?;
        let data = value["data"]
            .as_array()
            .ok_or_else(|| contract("missing data array"))?;
        let mut out: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item["index"].as_u64().map_or(pos, |i| i as usize);
            let vector: Vec<f64> = item["embedding"]
                .as_array()
                .ok_or_else(|| contract("missing embedding"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| contract("non-numeric embedding")))
                .collect::<Result<_, _>>()?;
            *out.get_mut(index).ok_or_else(|| contract("embedding index out of range"))? = Some(vector);
        }
        out.into_iter()
            .map(|v| v.ok_or_else(|| contract("embedding count mismatch")))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: usize,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_backoff_ms: 250,
        }
    }
}

struct Semaphore {
    available: Mutex<usize>,
    cond: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut n = self.available.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.cond.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("semaphore poisoned") += 1;
        self.0.cond.notify_one();
    }
}

pub struct Gateway {
    upstream: Option<Box<dyn Upstream>>,
    chat_model: String,
    embedding_model: String,
    mode: TranscriptMode,
    transcript_path: Option<PathBuf>,
    cache: Mutex<HashMap<String, CachedResponse>>,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    file_lock: Mutex<()>,
    embed_dim: Mutex<Option<usize>>,
    retry: RetryPolicy,
    in_flight: Semaphore,
    upstream_calls: AtomicUsize,
    pub default_params: DecodeParams,
}

impl Gateway {
    pub fn new(upstream: Box<dyn Upstream>, chat_model: impl Into<String>, embedding_model: impl Into<String>) -> Self {
        Self {
            upstream: Some(upstream),
            chat_model: chat_model.into(),
            embedding_model: embedding_model.into(),
            mode: TranscriptMode::Live,
            transcript_path: None,
            cache: Mutex::new(HashMap::new()),
            key_locks: Mutex::new(HashMap::new()),
            file_lock: Mutex::new(()),
            embed_dim: Mutex::new(None),
            retry: RetryPolicy::default(),
            in_flight: Semaphore::new(4),
            upstream_calls: AtomicUsize::new(0),
            default_params: DecodeParams::default(),
        }
    }

    pub fn mock(seed: u64, dim: usize) -> Self {
        Self::new(Box::new(MockUpstream::new(seed, dim)), "mock-chat", format!("mock-embed-{dim}-s{seed}"))
    }

    /// A gateway that answers only from `transcript`.
    pub fn replay(transcript: &Path, chat_model: impl Into<String>, embedding_model: impl Into<String>) -> Result<Self> {
        let mut gw = Self::new(Box::new(NoUpstream), chat_model, embedding_model);
        gw.upstream = None;
        gw.mode = TranscriptMode::Replay;
        gw.load_transcript(transcript)?;
        gw.transcript_path = Some(transcript.to_path_buf());
        Ok(gw)
    }

    /// Records every upstream answer to `transcript`, reusing entries it already holds.
    pub fn recording(mut self, transcript: &Path) -> Result<Self> {
        if transcript.exists() {
            self.load_transcript(transcript)?;
        }
        self.mode = TranscriptMode::Record;
        self.transcript_path = Some(transcript.to_path_buf());
        Ok(self)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.in_flight = Semaphore::new(n);
        self
    }

    pub fn with_default_params(mut self, params: DecodeParams) -> Self {
        self.default_params = params;
        self
    }

    pub fn mode(&self) -> TranscriptMode {
        self.mode
    }

    pub fn embedding_model(&self) -> &str {
        &self.embedding_model
    }

    /// Number of requests that reached the upstream backend.
    pub fn upstream_calls(&self) -> usize {
        self.upstream_calls.load(Ordering::SeqCst)
    }

    pub fn transcript(&self) -> GatewayTranscript {
        GatewayTranscript {
            entries: self.cache.lock().expect("cache poisoned").clone(),
            mode: self.mode,
        }
    }

    fn load_transcript(&mut self, path: &Path) -> Result<()> {
        let entries: Vec<TranscriptEntry> = util::read_jsonl(path)?;
        let cache = self.cache.get_mut().expect("cache poisoned");
        for e in entries {
            cache.insert(e.hash, e.response);
        }
        Ok(())
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.key_locks
            .lock()
            .expect("lock table poisoned")
            .entry(key.to_string())
            .or_default()
            .clone()
    }

    fn cached(&self, key: &str) -> Option<CachedResponse> {
        self.cache.lock().expect("cache poisoned").get(key).cloned()
    }

    fn store(&self, key: String, request: serde_json::Value, response: CachedResponse) -> Result<()> {
        if self.mode == TranscriptMode::Record {
            if let Some(path) = &self.transcript_path {
                let entry = TranscriptEntry {
                    hash: key.clone(),
                    request,
                    response: response.clone(),
                };
                let _guard = self.file_lock.lock().expect("file lock poisoned");
                util::append_line(path, &serde_json::to_string(&entry)?)?;
            }
        }
        self.cache.lock().expect("cache poisoned").insert(key, response);
        Ok(())
    }

    fn call_upstream<T>(&self, f: impl Fn(&dyn Upstream) -> Result<T, UpstreamError>) -> Result<T> {
        let upstream = self.upstream.as_deref().ok_or_else(|| Error::Config("no upstream backend".into()))?;
        let _permit = self.in_flight.acquire();
        let mut attempt = 0;
        loop {
            self.upstream_calls.fetch_add(1, Ordering::SeqCst);
            match f(upstream) {
                Ok(v) => return Ok(v),
                Err(UpstreamError::Fatal(e)) => return Err(e),
                Err(UpstreamError::Transient(message)) => {
                    attempt += 1;
                    if attempt > self.retry.max_retries {
                        return Err(Error::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    log::warn!("transient upstream failure (attempt {attempt}): {message}");
                    let backoff = self.retry.base_backoff_ms.saturating_mul(1 << (attempt - 1).min(10));
                    std::thread::sleep(Duration::from_millis(backoff));
                }
            }
        }
    }

    pub fn chat_request_hash(&self, req: &ChatRequest) -> String {
        util::hash_json(&json!({
            "kind": "chat",
            "model": self.chat_model,
            "system": req.system_prompt,
            "user": req.user_prompt,
            "temperature": req.decode_params.temperature,
            "max_output_tokens": req.decode_params.max_output_tokens,
        }))
    }

    pub fn chat_complete(&self, req: &ChatRequest) -> Result<String> {
        req.validate()?;
        let key = self.chat_request_hash(req);
        let lock = self.key_lock(&key);
        let _single_flight = lock.lock().expect("key lock poisoned");
        match self.cached(&key) {
            Some(CachedResponse::Text { text }) => return Ok(text),
            Some(CachedResponse::Vector { .. }) => {
                return Err(Error::Backend {
                    status: 0,
                    message: format!("transcript entry {key} is not a completion"),
                })
            }
            None if self.mode == TranscriptMode::Replay => return Err(Error::TranscriptMiss(key)),
            None => {}
        }
        let text = self.call_upstream(|u| u.chat(&self.chat_model, req))?;
        let summary = json!({
            "kind": "chat",
            "model": self.chat_model,
            "system": truncate_chars(&req.system_prompt, 120),
            "user": truncate_chars(&req.user_prompt, 120),
        });
        self.store(key, summary, CachedResponse::Text { text: text.clone() })?;
        Ok(text)
    }

    fn embed_key(&self, model_tag: &str, text: &str) -> String {
        util::hash_json(&json!({"kind": "embed", "model": model_tag, "text_sha256": util::sha256_hex(text)}))
    }

    pub fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>> {
        if req.texts.is_empty() {
            return Err(Error::InvalidArgument("empty embedding batch".into()));
        }
        if req.texts.iter().any(|t| t.is_empty()) {
            return Err(Error::InvalidArgument("empty text in embedding batch".into()));
        }
        let keys: Vec<String> = req.texts.iter().map(|t| self.embed_key(&req.model_tag, t)).collect();
        let mut missing: Vec<(String, String)> = Vec::new();
        for (key, text) in keys.iter().zip(&req.texts) {
            if self.cached(key).is_none() && !missing.iter().any(|(k, _)| k == key) {
                missing.push((key.clone(), text.clone()));
            }
        }
        if !missing.is_empty() {
            if self.mode == TranscriptMode::Replay {
                return Err(Error::TranscriptMiss(missing[0].0.clone()));
            }
            let mut locks: Vec<Arc<Mutex<()>>> = missing.iter().map(|(k, _)| self.key_lock(k)).collect();
            locks.sort_by_key(|l| Arc::as_ptr(l) as usize);
            let _guards: Vec<_> = locks.iter().map(|l| l.lock().expect("key lock poisoned")).collect();
            missing.retain(|(k, _)| self.cached(k).is_none());
            if !missing.is_empty() {
                let texts: Vec<String> = missing.iter().map(|(_, t)| t.clone()).collect();
                let vectors = self.call_upstream(|u| u.embed(&req.model_tag, &texts))?;
                if vectors.len() != texts.len() {
                    return Err(Error::Backend {
                        status: 0,
                        message: format!("expected {} vectors, got {}", texts.len(), vectors.len()),
                    });
                }
                for ((key, text), vector) in missing.into_iter().zip(vectors) {
                    self.check_dim(vector.len())?;
                    let summary = json!({"kind": "embed", "model": req.model_tag, "text": truncate_chars(&text, 120)});
                    self.store(key, summary, CachedResponse::Vector { vector })?;
                }
            }
        }
        keys.iter()
            .map(|k| match self.cached(k) {
                Some(CachedResponse::Vector { vector }) => {
                    self.check_dim(vector.len())?;
                    Ok(vector)
                }
                _ => Err(Error::TranscriptMiss(k.clone())),
            })
            .collect()
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let mut known = self.embed_dim.lock().expect("dim poisoned");
        match *known {
            Some(d) if d != dim => Err(Error::DimensionMismatch {
                expected: d,
                actual: dim,
            }),
            Some(_) => Ok(()),
            None => {
                *known = Some(dim);
                Ok(())
            }
        }
    }
}

impl EmbeddingBackend for Gateway {
    fn tag(&self) -> String {
        self.embedding_model.clone()
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        self.embed(&EmbeddingRequest {
            texts: texts.to_vec(),
            model_tag: self.embedding_model.clone(),
        })
    }
}

struct NoUpstream;

impl Upstream for NoUpstream {
    fn chat(&self, _: &str, _: &ChatRequest) -> Result<String, UpstreamError> {
        Err(UpstreamError::Fatal(Error::Config("no upstream backend".into())))
    }

    fn embed(&self, _: &str, _: &[String]) -> Result<Vec<Vec<f64>>, UpstreamError> {
        Err(UpstreamError::Fatal(Error::Config("no upstream backend".into())))
    }
}

fn truncate_chars(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}
