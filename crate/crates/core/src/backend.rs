//! Completion backends: the replay fixture backend, the live HTTP client,
//! a shared request-rate limiter and a persistent completion cache.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no replay fixture for this sentence")]
    MissingFixture,
    #[error("environment variable {0} is not set")]
    MissingCredential(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("rate limited by endpoint; retry after {}s", retry_after.map(|d| d.as_secs()).unwrap_or(0))]
    RateLimited { retry_after: Option<Duration> },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response body: {0}")]
    InvalidResponse(String),
    #[error("fixture file {}:{line}: {message}", path.display())]
    Fixture {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BackendError {
    /// Transient failures worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::Transport(_) | BackendError::RateLimited { .. } => true,
            BackendError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// A single completion request.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub sentence: &'a str,
    /// Hex SHA-256 of the template body the prompt was rendered from.
    pub template_digest: &'a str,
}

/// A completions-style text generator.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;

    fn model(&self) -> &str;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        (**self).complete(request)
    }
    fn model(&self) -> &str {
        (**self).model()
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        (**self).complete(request)
    }
    fn model(&self) -> &str {
        (**self).model()
    }
}

/// One line of a replay fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayFixture {
    pub sentence: String,
    pub completion: String,
}

/// Answers from a sentence → completion table.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    completions: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn new(fixtures: impl IntoIterator<Item = ReplayFixture>) -> Self {
        ReplayBackend {
            completions: fixtures
                .into_iter()
                .map(|f| (f.sentence, f.completion))
                .collect(),
        }
    }

    pub fn from_jsonl(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut fixtures = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fixture: ReplayFixture =
                serde_json::from_str(&line).map_err(|e| BackendError::Fixture {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            fixtures.push(fixture);
        }
        Ok(Self::new(fixtures))
    }

    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        self.completions
            .get(request.sentence)
            .cloned()
            .ok_or(BackendError::MissingFixture)
    }

    fn model(&self) -> &str {
        "replay"
    }
}

/// Sliding-window limiter: at most `per_minute` request starts in any
/// 60-second window. Shared by every worker of one backend.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: u32,
    starts: Mutex<VecDeque<Instant>>,
}

const WINDOW: Duration = Duration::from_secs(60);

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        assert!(per_minute > 0, "rate limit must be positive");
        RateLimiter {
            per_minute,
            starts: Mutex::new(VecDeque::new()),
        }
    }

    /// Records a start at `now` if allowed, otherwise returns how long to wait.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        let mut starts = self.starts.lock().unwrap_or_else(|e| e.into_inner());
        while let Some(&front) = starts.front() {
            if now.saturating_duration_since(front) >= WINDOW {
                starts.pop_front();
            } else {
                break;
            }
        }
        if starts.len() < self.per_minute as usize {
            starts.push_back(now);
            Ok(())
        } else {
            let oldest = *starts.front().expect("window is full");
            Err(WINDOW - now.saturating_duration_since(oldest))
        }
    }

    /// Blocks until a request may start.
    pub fn acquire(&self) {
        loop {
            match self.try_acquire_at(Instant::now()) {
                Ok(()) => return,
                Err(wait) => std::thread::sleep(wait.max(Duration::from_millis(1))),
            }
        }
    }
}

/// Settings for a live completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub credential_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub requests_per_minute: u32,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "https://api.openai.com/v1/completions".into(),
            model: "text-davinci-003".into(),
            credential_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 3,
            requests_per_minute: 60,
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

/// Exponential backoff: 1s, 2s, 4s, ... capped at 60s.
pub fn backoff_delay(attempt: u32) -> Duration {
    Duration::from_secs(1u64 << attempt.min(6)).min(Duration::from_secs(60))
}

#[cfg(feature = "http")]
pub use http::HttpBackend;

#[cfg(feature = "http")]
mod http {
    use super::*;
    use serde_json::json;

    /// Blocking client for an OpenAI-compatible `/completions` endpoint.
    pub struct HttpBackend {
        config: BackendConfig,
        api_key: String,
        client: reqwest::blocking::Client,
        limiter: RateLimiter,
        base_delay: Duration,
    }

    impl HttpBackend {
        /// Reads the API key from `config.credential_env`.
        pub fn from_env(config: BackendConfig) -> Result<Self, BackendError> {
            let key = std::env::var(&config.credential_env)
                .ok()
                .filter(|k| !k.is_empty())
                .ok_or_else(|| BackendError::MissingCredential(config.credential_env.clone()))?;
            Self::with_key(config, key)
        }

        pub fn with_key(config: BackendConfig, api_key: String) -> Result<Self, BackendError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(config.timeout_secs))
                .build()
                .map_err(|e| BackendError::Transport(e.to_string()))?;
            Ok(HttpBackend {
                limiter: RateLimiter::new(config.requests_per_minute),
                config,
                api_key,
                client,
                base_delay: Duration::from_secs(1),
            })
        }

        /// Scales every backoff sleep; tests use a tiny value.
        pub fn with_base_delay(mut self, base: Duration) -> Self {
            self.base_delay = base;
            self
        }

        fn delay(&self, attempt: u32) -> Duration {
            self.base_delay
                .saturating_mul(backoff_delay(attempt).as_secs() as u32)
        }

        fn attempt(&self, prompt: &str) -> Result<String, BackendError> {
            self.limiter.acquire();
            let body = json!({
                "model": self.config.model,
                "prompt": prompt,
                "temperature": self.config.temperature,
                "max_tokens": self.config.max_tokens,
                "n": 1,
            });
            let resp = self
                .client
                .post(&self.config.endpoint)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send()
                .map_err(|e| {
                    if e.is_timeout() {
                        BackendError::Timeout
                    } else {
                        BackendError::Transport(e.to_string())
                    }
                })?;
            let status = resp.status();
            if status.as_u16() == 429 {
                let retry_after = resp
                    .headers()
                    .get(reqwest::header::RETRY_AFTER)
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<u64>().ok())
                    .map(Duration::from_secs);
                return Err(BackendError::RateLimited { retry_after });
            }
            let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
            if !status.is_success() {
                return Err(BackendError::Http {
                    status: status.as_u16(),
                    body: text.chars().take(200).collect(),
                });
            }
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
            value["choices"][0]["text"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| BackendError::InvalidResponse("missing choices[0].text".into()))
        }
    }

    impl CompletionBackend for HttpBackend {
        fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
            let mut attempt = 0;
            loop {
                match self.attempt(request.prompt) {
                    Ok(text) => return Ok(text),
                    Err(err) if err.is_retryable() && attempt < self.config.max_retries => {
                        let wait = match &err {
                            BackendError::RateLimited {
                                retry_after: Some(d),
                            } => (*d).min(Duration::from_secs(60)),
                            _ => self.delay(attempt),
                        };
                        std::thread::sleep(wait);
                        attempt += 1;
                    }
                    Err(err) => return Err(err),
                }
            }
        }

        fn model(&self) -> &str {
            &self.config.model
        }
    }
}

/// Cache key for one completion: (template digest, sentence, model).
pub fn cache_key(template_digest: &str, sentence: &str, model: &str) -> String {
    let mut h = Sha256::new();
    for part in [template_digest, sentence, model] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    completion: String,
}

/// Wraps a backend so each (template, sentence, model) is paid for once.
/// With a path, hits persist across runs as JSON-lines.
pub struct CachedBackend<B> {
    inner: B,
    entries: Mutex<HashMap<String, String>>,
    file: Option<Mutex<File>>,
}

impl<B: CompletionBackend> CachedBackend<B> {
    pub fn in_memory(inner: B) -> Self {
        CachedBackend {
            inner,
            entries: Mutex::new(HashMap::new()),
            file: None,
        }
    }

    pub fn persistent(inner: B, path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheLine =
                    serde_json::from_str(&line).map_err(|e| BackendError::Fixture {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                entries.insert(entry.key, entry.completion);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(CachedBackend {
            inner,
            entries: Mutex::new(entries),
            file: Some(Mutex::new(file)),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().map(|e| e.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<B: CompletionBackend> CompletionBackend for CachedBackend<B> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let key = cache_key(request.template_digest, request.sentence, self.inner.model());
        if let Some(hit) = self.entries.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(hit.clone());
        }
        let completion = self.inner.complete(request)?;
        if let Some(file) = &self.file {
            let line = serde_json::to_string(&CacheLine {
                key: key.clone(),
                completion: completion.clone(),
            })
            .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
            let mut f = file.lock().unwrap_or_else(|e| e.into_inner());
            writeln!(f, "{line}")?;
        }
        self.entries
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, completion.clone());
        Ok(completion)
    }

    fn model(&self) -> &str {
        self.inner.model()
    }
}
