//! Provider-agnostic chat-completion client.
//!
//! Everything above this module talks to [`ChatProvider`]. Concrete
//! providers: an OpenAI-compatible HTTPS endpoint, a fixture replayer for
//! deterministic tests, and a recorder that captures fixtures from any other
//! provider.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {0}")]
    Status(u16),
    #[error("could not decode provider response: {0}")]
    Decode(String),
    #[error("no fixture recorded for prompt hash {0}")]
    FixtureMiss(String),
    #[error("no provider configured for model {0:?}")]
    UnknownModel(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// Sampling seed; also selects among fixtures recorded for the same prompt.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    /// SHA-256 (hex) over the role and content of every message.
    pub fn prompt_hash(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.messages {
            h.update(format!("{:?}", m.role).as_bytes());
            h.update([0u8]);
            h.update(m.content.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

/// One recorded reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub prompt_hash: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

/// Replays recorded replies keyed by prompt hash. When several replies exist
/// for one hash the request seed picks among them.
pub struct FixtureProvider {
    entries: HashMap<String, Vec<FixtureEntry>>,
}

impl FixtureProvider {
    pub fn new(entries: Vec<FixtureEntry>) -> Self {
        let mut map: HashMap<String, Vec<FixtureEntry>> = HashMap::new();
        for e in entries {
            map.entry(e.prompt_hash.clone()).or_default().push(e);
        }
        FixtureProvider { entries: map }
    }

    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let entries: Vec<FixtureEntry> =
            serde_json::from_str(text).map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatProvider for FixtureProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let hash = request.prompt_hash();
        let all = self
            .entries
            .get(&hash)
            .ok_or_else(|| ProviderError::FixtureMiss(hash.clone()))?;
        let for_model: Vec<&FixtureEntry> = all
            .iter()
            .filter(|e| e.model.as_deref().is_none_or(|m| m == request.model))
            .collect();
        if for_model.is_empty() {
            return Err(ProviderError::FixtureMiss(hash));
        }
        let pick = request.seed.unwrap_or(0) as usize % for_model.len();
        Ok(for_model[pick].response.clone())
    }
}

/// Passes requests through and keeps every successful reply as a fixture.
pub struct RecordingProvider<P> {
    inner: P,
    recorded: Mutex<Vec<FixtureEntry>>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        RecordingProvider {
            inner,
            recorded: Mutex::new(Vec::new()),
        }
    }

    pub fn fixtures(&self) -> Vec<FixtureEntry> {
        self.recorded.lock().clone()
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let response = self.inner.complete(request)?;
        self.recorded.lock().push(FixtureEntry {
            prompt_hash: request.prompt_hash(),
            response: response.clone(),
            model: None,
        });
        Ok(response)
    }
}

/// Chat-completions over HTTPS (`POST {base_url}/chat/completions`).
pub struct OpenAiCompatibleProvider {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    #[serde(default)]
    content: Option<String>,
}

impl OpenAiCompatibleProvider {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        OpenAiCompatibleProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            agent,
        }
    }

    /// Reads the API key from the named environment variable.
    pub fn from_env(
        base_url: impl Into<String>,
        api_key_env: &str,
        timeout: Duration,
    ) -> Result<Self, ProviderError> {
        let key = std::env::var(api_key_env)
            .map_err(|_| ProviderError::Config(format!("environment variable {api_key_env} is not set")))?;
        Ok(Self::new(base_url, Some(key), timeout))
    }
}

impl ChatProvider for OpenAiCompatibleProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut call = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(request).map_err(|e| match e {
            ureq::Error::StatusCode(code) => ProviderError::Status(code),
            other => ProviderError::Transport(other.to_string()),
        })?;
        let body: CompletionBody = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Decode(e.to_string()))?;
        body.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Decode("response has no message content".into()))
    }
}

/// Caps concurrent requests and spaces out request starts.
pub struct Throttled<P> {
    inner: P,
    max_in_flight: usize,
    min_interval: Duration,
    in_flight: Mutex<usize>,
    freed: Condvar,
    last_start: Mutex<Option<Instant>>,
}

impl<P: ChatProvider> Throttled<P> {
    pub fn new(inner: P, max_in_flight: usize, min_interval: Duration) -> Self {
        Throttled {
            inner,
            max_in_flight: max_in_flight.max(1),
            min_interval,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            last_start: Mutex::new(None),
        }
    }
}

impl<P: ChatProvider> ChatProvider for Throttled<P> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        {
            let mut n = self.in_flight.lock();
            while *n >= self.max_in_flight {
                self.freed.wait(&mut n);
            }
            *n += 1;
        }
        if !self.min_interval.is_zero() {
            let mut last = self.last_start.lock();
            if let Some(prev) = *last {
                let ready = prev + self.min_interval;
                let now = Instant::now();
                if ready > now {
                    std::thread::sleep(ready - now);
                }
            }
            *last = Some(Instant::now());
        }
        let result = self.inner.complete(request);
        *self.in_flight.lock() -= 1;
        self.freed.notify_one();
        result
    }
}

/// Maps model names to providers, with an optional catch-all.
#[derive(Clone, Default)]
pub struct ProviderRegistry {
    default: Option<Arc<dyn ChatProvider>>,
    by_model: HashMap<String, Arc<dyn ChatProvider>>,
}

impl ProviderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(provider: Arc<dyn ChatProvider>) -> Self {
        ProviderRegistry {
            default: Some(provider),
            by_model: HashMap::new(),
        }
    }

    pub fn register(&mut self, model: impl Into<String>, provider: Arc<dyn ChatProvider>) {
        self.by_model.insert(model.into(), provider);
    }

    pub fn set_default(&mut self, provider: Arc<dyn ChatProvider>) {
        self.default = Some(provider);
    }

    pub fn resolve(&self, model: &str) -> Result<Arc<dyn ChatProvider>, ProviderError> {
        self.by_model
            .get(model)
            .or(self.default.as_ref())
            .cloned()
            .ok_or_else(|| ProviderError::UnknownModel(model.to_string()))
    }
}
