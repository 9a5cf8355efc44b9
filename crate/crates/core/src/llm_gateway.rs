//! Chat-completion client with record/replay cassettes, bounded retries and
//! structured-output extraction.
//!
//! A cassette is a JSONL file of `{fingerprint, tag, model_id, response}`
//! entries keyed by [`fingerprint`]. Requests and credentials are never
//! written to it.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_TEMPERATURE: f64 = 0.3;
pub const DEFAULT_TOP_P: f64 = 0.95;
pub const ENV_API_BASE: &str = "MAINTAINKIT_API_BASE";
pub const ENV_API_KEY: &str = "MAINTAINKIT_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub model_id: String,
    /// Agent or stage label, e.g. `phase1/p1/0/maintaincoder/analysis/1`.
    pub tag: String,
}

impl ChatRequest {
    /// Single user message with default sampling settings.
    pub fn user(model_id: impl Into<String>, tag: impl Into<String>, text: impl Into<String>) -> Self {
        ChatRequest {
            messages: vec![Message { role: Role::User, content: text.into() }],
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            model_id: model_id.into(),
            tag: tag.into(),
        }
    }

    pub fn prompt_text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

/// Hex SHA-256 over a fixed-order serialization of the request.
pub fn fingerprint(request: &ChatRequest) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        messages: &'a [Message],
        temperature: f64,
        top_p: f64,
        model_id: &'a str,
        tag: &'a str,
    }
    let canonical = Canonical {
        messages: &request.messages,
        temperature: request.temperature,
        top_p: request.top_p,
        model_id: &request.model_id,
        tag: &request.tag,
    };
    let bytes = serde_json::to_vec(&canonical).expect("request serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    Record,
    Replay,
    Live,
}

impl std::str::FromStr for CassetteMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "record" => Ok(CassetteMode::Record),
            "replay" => Ok(CassetteMode::Replay),
            "live" => Ok(CassetteMode::Live),
            other => Err(format!("unknown cassette mode `{other}` (expected record, replay or live)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub tag: String,
    pub model_id: String,
    pub response: String,
}

/// Fingerprint-addressed response store. Appends are serialized through one file handle.
pub struct Cassette {
    mode: CassetteMode,
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, String>>,
    log: Mutex<Option<File>>,
}

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("cassette {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cassette {path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

impl Cassette {
    pub fn in_memory(mode: CassetteMode) -> Self {
        Cassette { mode, path: None, entries: RwLock::new(HashMap::new()), log: Mutex::new(None) }
    }

    pub fn from_entries(mode: CassetteMode, entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        let c = Self::in_memory(mode);
        c.entries.write().expect("fresh lock").extend(entries.into_iter().map(|e| (e.fingerprint, e.response)));
        c
    }

    /// Open a cassette file. Replay requires the file; record creates it and appends.
    pub fn open(path: &Path, mode: CassetteMode) -> Result<Self, CassetteError> {
        let io = |source| CassetteError::Io { path: path.to_path_buf(), source };
        let mut entries = HashMap::new();
        if path.exists() || mode == CassetteMode::Replay {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| CassetteError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                entries.insert(entry.fingerprint, entry.response);
            }
        }
        let log = match mode {
            CassetteMode::Record => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(io)?;
                }
                Some(OpenOptions::new().create(true).append(true).open(path).map_err(io)?)
            }
            _ => None,
        };
        Ok(Cassette { mode, path: Some(path.to_path_buf()), entries: RwLock::new(entries), log: Mutex::new(log) })
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().map_or(0, |e| e.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, fingerprint: &str) -> Option<String> {
        self.entries.read().ok()?.get(fingerprint).cloned()
    }

    fn record(&self, request: &ChatRequest, fingerprint: &str, response: &str) -> Result<(), CassetteError> {
        let entry = CassetteEntry {
            fingerprint: fingerprint.to_string(),
            tag: request.tag.clone(),
            model_id: request.model_id.clone(),
            response: response.to_string(),
        };
        let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(file) = log.as_mut() {
            let mut line = serde_json::to_string(&entry).expect("entry serializes");
            line.push('\n');
            file.write_all(line.as_bytes()).and_then(|_| file.flush()).map_err(|source| CassetteError::Io {
                path: self.path.clone().unwrap_or_default(),
                source,
            })?;
        }
        self.entries.write().unwrap_or_else(|e| e.into_inner()).insert(entry.fingerprint, entry.response);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("provider rejected the request: {0}")]
    Fatal(String),
}

impl ProviderError {
    fn retryable(&self) -> bool {
        matches!(self, ProviderError::Transient(_) | ProviderError::RateLimited(_))
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

/// OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpBackend {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpBackend { base_url: base_url.into().trim_end_matches('/').to_string(), api_key: api_key.into(), client })
    }

    /// Configure from `MAINTAINKIT_API_BASE` and `MAINTAINKIT_API_KEY`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let base = std::env::var(ENV_API_BASE).map_err(|_| GatewayError::Config(format!("{ENV_API_BASE} is not set")))?;
        let key = std::env::var(ENV_API_KEY).map_err(|_| GatewayError::Config(format!("{ENV_API_KEY} is not set")))?;
        Self::new(base, key, Duration::from_secs(300))
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body = serde_json::json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "top_p": request.top_p,
        });
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ProviderError::Transient(e.without_url().to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transient(e.without_url().to_string()))?;
        if status.as_u16() == 429 {
            return Err(ProviderError::RateLimited(text));
        }
        if status.is_server_error() {
            return Err(ProviderError::Transient(format!("{status}: {text}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Fatal(format!("{status}: {text}")));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| ProviderError::Fatal(format!("bad response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Fatal("response has no choices[0].message.content".into()))
    }
}

type Script = dyn Fn(&ChatRequest, u64) -> Result<String, ProviderError> + Send + Sync;

/// Backend driven by a closure; receives the request and the 0-based call number.
pub struct ScriptedBackend {
    script: Box<Script>,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new(script: impl Fn(&ChatRequest, u64) -> Result<String, ProviderError> + Send + Sync + 'static) -> Self {
        ScriptedBackend { script: Box::new(script), calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(request, n)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub budget: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { budget: 3, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    pub fn immediate(budget: u32) -> Self {
        RetryPolicy { budget, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16)).min(self.max_delay)
    }
}

/// Spaces live requests at least `60 / per_minute` seconds apart.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        RateLimiter { interval: Duration::from_secs(60) / requests.max(1), next: Mutex::new(Instant::now()) }
    }

    pub fn wait(&self) {
        let slot = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("[{tag}] provider error after {attempts} attempt(s): {source}")]
    Provider { tag: String, attempts: u32, source: ProviderError },
    #[error("[{tag}] no cassette entry for fingerprint {fingerprint}")]
    ReplayMiss { tag: String, fingerprint: String },
    #[error("[{tag}] requests with this tag are not allowed here")]
    ForbiddenTag { tag: String },
    #[error("no chat backend configured for {0:?} mode")]
    NoBackend(CassetteMode),
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Cassette(#[from] CassetteError),
}

pub struct Gateway {
    cassette: Arc<Cassette>,
    backend: Option<Arc<dyn ChatBackend>>,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
    forbidden: RwLock<Vec<String>>,
    network_calls: AtomicU64,
}

impl Gateway {
    pub fn new(cassette: Arc<Cassette>, backend: Option<Arc<dyn ChatBackend>>) -> Self {
        Gateway {
            cassette,
            backend,
            retry: RetryPolicy::default(),
            limiter: None,
            forbidden: RwLock::new(Vec::new()),
            network_calls: AtomicU64::new(0),
        }
    }

    /// Replay-only gateway over a cassette.
    pub fn replay(cassette: Arc<Cassette>) -> Self {
        Self::new(cassette, None)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, per_minute: u32) -> Self {
        self.limiter = Some(RateLimiter::per_minute(per_minute));
        self
    }

    pub fn cassette(&self) -> &Cassette {
        &self.cassette
    }

    /// Reject any later request whose tag starts with `prefix`.
    pub fn forbid_tag_prefix(&self, prefix: impl Into<String>) {
        self.forbidden.write().unwrap_or_else(|e| e.into_inner()).push(prefix.into());
    }

    /// Backend invocations made so far, including failed attempts.
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        if self.forbidden.read().unwrap_or_else(|e| e.into_inner()).iter().any(|p| request.tag.starts_with(p.as_str())) {
            return Err(GatewayError::ForbiddenTag { tag: request.tag.clone() });
        }
        let fp = fingerprint(request);
        let mode = self.cassette.mode();
        if mode == CassetteMode::Replay {
            return self
                .cassette
                .lookup(&fp)
                .ok_or_else(|| GatewayError::ReplayMiss { tag: request.tag.clone(), fingerprint: fp });
        }
        let backend = self.backend.as_ref().ok_or(GatewayError::NoBackend(mode))?;
        let mut attempt = 0u32;
        let response = loop {
            if let Some(limiter) = &self.limiter {
                limiter.wait();
            }
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            match backend.complete(request) {
                Ok(text) => break text,
                Err(e) if e.retryable() && attempt < self.retry.budget => {
                    thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(source) => {
                    return Err(GatewayError::Provider { tag: request.tag.clone(), attempts: attempt + 1, source });
                }
            }
        };
        if mode == CassetteMode::Record {
            self.cassette.record(request, &fp, &response)?;
        }
        Ok(response)
    }
}

pub fn complete_chat(request: &ChatRequest, gateway: &Gateway) -> Result<String, GatewayError> {
    gateway.complete(request)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeExtraction {
    pub code: String,
    /// True when no fenced block was found and the whole response was used.
    pub fallback: bool,
}

/// Contents of the first fenced code block, or the trimmed response.
pub fn extract_code_block(response: &str) -> CodeExtraction {
    let mut lines = response.lines();
    while let Some(line) = lines.next() {
        if line.trim_start().starts_with("```") {
            let body: Vec<&str> = lines.by_ref().take_while(|l| !l.trim_start().starts_with("```")).collect();
            let mut code = body.join("\n");
            code.push('\n');
            return CodeExtraction { code, fallback: false };
        }
    }
    CodeExtraction { code: response.trim().to_string(), fallback: true }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no JSON object in response: {reason}")]
pub struct JsonExtractError {
    pub reason: String,
    pub raw: String,
}

fn largest_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

fn parse_object(candidate: &str) -> Result<Map<String, Value>, String> {
    match serde_json::from_str::<Value>(candidate) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err("top-level value is not an object".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// Drop trailing commas and escape raw control characters inside strings.
fn repair_json(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
                out.push(c);
            } else if c == '\\' {
                escaped = true;
                out.push(c);
            } else if c == '"' {
                in_string = false;
                out.push(c);
            } else if c == '\n' {
                out.push_str("\\n");
            } else if c == '\t' {
                out.push_str("\\t");
            } else if c == '\r' {
                out.push_str("\\r");
            } else {
                out.push(c);
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            ',' if chars[i + 1..].iter().find(|n| !n.is_whitespace()).is_some_and(|n| *n == '}' || *n == ']') => {}
            _ => out.push(c),
        }
    }
    out
}

/// Parse the largest `{...}` region; on failure strip fences and repair once.
pub fn extract_json(response: &str) -> Result<Map<String, Value>, JsonExtractError> {
    let fail = |reason: String| JsonExtractError { reason, raw: response.to_string() };
    let first = match largest_object(response) {
        Some(candidate) => match parse_object(candidate) {
            Ok(map) => return Ok(map),
            Err(e) => e,
        },
        None => "no braces".to_string(),
    };
    let unfenced: String =
        response.lines().filter(|l| !l.trim_start().starts_with("```")).collect::<Vec<_>>().join("\n");
    let repaired = repair_json(&unfenced);
    let candidate = largest_object(&repaired).ok_or_else(|| fail(first.clone()))?;
    parse_object(candidate).map_err(|e| fail(format!("{first}; after repair: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: &str) -> ChatRequest {
        ChatRequest::user("m", tag, "hello")
    }

    #[test]
    fn fingerprint_properties() {
        assert_eq!(fingerprint(&req("a")), fingerprint(&req("a")));
        assert_ne!(fingerprint(&req("a")), fingerprint(&req("b")));
        let mut hot = req("a");
        hot.temperature = 0.7;
        assert_ne!(fingerprint(&hot), fingerprint(&req("a")));
        let mut two = req("a");
        two.messages.push(Message { role: Role::Assistant, content: "x".into() });
        let mut swapped = two.clone();
        swapped.messages.reverse();
        assert_ne!(fingerprint(&two), fingerprint(&swapped));
        assert_eq!(fingerprint(&req("a")).len(), 64);
    }

    #[test]
    fn defaults() {
        let r = req("a");
        assert_eq!((r.temperature, r.top_p), (0.3, 0.95));
    }

    #[test]
    fn replay_hit_and_miss() {
        let entry = CassetteEntry { fingerprint: fingerprint(&req("a")), tag: "a".into(), model_id: "m".into(), response: "R".into() };
        let gw = Gateway::replay(Arc::new(Cassette::from_entries(CassetteMode::Replay, [entry])));
        assert_eq!(gw.complete(&req("a")).unwrap(), "R");
        assert!(matches!(gw.complete(&req("b")), Err(GatewayError::ReplayMiss { .. })));
        assert_eq!(gw.network_calls(), 0);
    }

    #[test]
    fn retries_transient_failures() {
        let backend = Arc::new(ScriptedBackend::new(|_, n| {
            if n < 2 {
                Err(ProviderError::Transient("reset".into()))
            } else {
                Ok("ok".into())
            }
        }));
        let gw = Gateway::new(Arc::new(Cassette::in_memory(CassetteMode::Live)), Some(backend.clone()))
            .with_retry(RetryPolicy::immediate(3));
        assert_eq!(gw.complete(&req("a")).unwrap(), "ok");
        assert_eq!(backend.calls(), 3);
    }

    #[test]
    fn retry_budget_and_fatal_errors() {
        let always = Arc::new(ScriptedBackend::new(|_, _| Err(ProviderError::RateLimited("slow down".into()))));
        let gw = Gateway::new(Arc::new(Cassette::in_memory(CassetteMode::Live)), Some(always.clone()))
            .with_retry(RetryPolicy::immediate(3));
        assert!(matches!(gw.complete(&req("a")), Err(GatewayError::Provider { attempts: 4, .. })));
        assert_eq!(always.calls(), 4);

        let fatal = Arc::new(ScriptedBackend::new(|_, _| Err(ProviderError::Fatal("bad key".into()))));
        let gw = Gateway::new(Arc::new(Cassette::in_memory(CassetteMode::Live)), Some(fatal.clone()))
            .with_retry(RetryPolicy::immediate(3));
        assert!(gw.complete(&req("a")).is_err());
        assert_eq!(fatal.calls(), 1);
    }

    #[test]
    fn record_then_replay_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let backend = Arc::new(ScriptedBackend::new(|r, _| Ok(format!("echo {}", r.tag))));
        let gw = Gateway::new(Arc::new(Cassette::open(&path, CassetteMode::Record).unwrap()), Some(backend));
        assert_eq!(gw.complete(&req("x")).unwrap(), "echo x");
        drop(gw);
        let gw = Gateway::replay(Arc::new(Cassette::open(&path, CassetteMode::Replay).unwrap()));
        assert_eq!(gw.complete(&req("x")).unwrap(), "echo x");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("hello"), "request text leaked into cassette");
    }

    #[test]
    fn forbidden_tags() {
        let gw = Gateway::new(
            Arc::new(Cassette::in_memory(CassetteMode::Live)),
            Some(Arc::new(ScriptedBackend::new(|_, _| Ok(String::new())))),
        );
        gw.forbid_tag_prefix("phase1/");
        assert!(matches!(gw.complete(&req("phase1/p/0")), Err(GatewayError::ForbiddenTag { .. })));
        assert!(gw.complete(&req("phase2/p/0")).is_ok());
    }

    #[test]
    fn code_block_extraction() {
        assert_eq!(extract_code_block("text\n```python\ndef f():\n    pass\n```\nmore").code, "def f():\n    pass\n");
        let two = extract_code_block("```\na = 1\n```\n```python\nb = 2\n```");
        assert_eq!((two.code.as_str(), two.fallback), ("a = 1\n", false));
        let prose = extract_code_block("  just words  ");
        assert_eq!((prose.code.as_str(), prose.fallback), ("just words", true));
    }

    #[test]
    fn json_extraction() {
        assert_eq!(extract_json(r#"{"a": 1}"#).unwrap()["a"], 1);
        assert_eq!(extract_json("Sure!\n```json\n{\"a\": [1, 2,],}\n```").unwrap()["a"], serde_json::json!([1, 2]));
        assert_eq!(extract_json("{\"code\": \"def f():\n    return 1\"}").unwrap()["code"], "def f():\n    return 1");
        let err = extract_json("no json here").unwrap_err();
        assert_eq!(err.raw, "no json here");
        assert!(extract_json("[1, 2]").is_err());
    }
}
