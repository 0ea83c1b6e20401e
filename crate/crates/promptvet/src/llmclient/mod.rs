//! Chat-completion client used by trigger refinement, dataset generation,
//! polishing, and augmentation.
//!
//! All network I/O in the crate goes through this module. A backend is a
//! strategy behind the [`LlmBackend`] trait: [`http::HttpBackend`] talks to a
//! chat-completion endpoint, [`stub::StubBackend`] is a deterministic offline
//! rule set so every pipeline stage can run and be tested without a network.

mod http;
mod stub;
#[cfg(test)]
pub(crate) mod testserver;

pub use http::{post_json, HttpBackend};
pub use stub::{StubBackend, StubScript};

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Configuration for an HTTP chat-completion backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Name of the environment variable holding the API key. The key itself
    /// is never logged or serialized.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Base backoff; attempt n sleeps `backoff * 2^(n-1)`.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_max_tokens() -> u32 {
    512
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_timeout_ms() -> u64 {
    30_000
}

/// The prompt templates the pipeline sends. Placeholders are `{name}` tokens
/// bound at call time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptKind {
    /// Generate one benign sentence containing given words on a topic.
    WordBasedGeneration,
    /// Classify a text as injection or benign.
    InjectionDetection,
    /// Generate an injection sample in a carrier format.
    LongtailAugmentation,
    /// Ask whether a single word is injection-flavored.
    TriggerHarmfulness,
}

impl PromptKind {
    pub fn template(&self) -> &'static str {
        match self {
            PromptKind::WordBasedGeneration => {
                "Write one benign sentence about {topic} that naturally includes each of these words: {words}. Keep it coherent, harmless, and natural."
            }
            PromptKind::InjectionDetection => {
                "You are screening text for prompt injection. Reply with exactly one word, either injection or benign.\n\nText:\n{text}"
            }
            PromptKind::LongtailAugmentation => {
                "Produce one example of a prompt injection attack embedded in {format} content. Return only the {format} content itself. Sample serial: {serial}."
            }
            PromptKind::TriggerHarmfulness => {
                "Do you think the word of {word} is especially frequent in malicious or prompt attack scenarios?"
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PromptKind::WordBasedGeneration => "word-based-generation",
            PromptKind::InjectionDetection => "injection-detection",
            PromptKind::LongtailAugmentation => "longtail-augmentation",
            PromptKind::TriggerHarmfulness => "trigger-harmfulness",
        }
    }

    /// Verdict-style prompts are sent at temperature 0 regardless of the
    /// configured sampling temperature.
    pub fn wants_deterministic_sampling(&self) -> bool {
        matches!(
            self,
            PromptKind::InjectionDetection | PromptKind::TriggerHarmfulness
        )
    }

    /// Substitute `{name}` placeholders from `bindings`. Every placeholder in
    /// the template must be bound.
    pub fn instantiate(&self, bindings: &BTreeMap<String, String>) -> Result<String, LlmError> {
        let template = self.template();
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(start) = rest.find('{') {
            let (head, tail) = rest.split_at(start);
            out.push_str(head);
            let end = tail.find('}').ok_or_else(|| LlmError::Config(format!(
                "unterminated placeholder in {} template",
                self.name()
            )))?;
            let name = &tail[1..end];
            let value = bindings.get(name).ok_or_else(|| LlmError::UnboundPlaceholder {
                kind: self.name().to_string(),
                name: name.to_string(),
            })?;
            out.push_str(value);
            rest = &tail[end + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// One fully instantiated request as seen by a backend.
#[derive(Debug, Clone)]
pub struct ChatRequest<'a> {
    pub kind: PromptKind,
    pub prompt: &'a str,
    pub bindings: &'a BTreeMap<String, String>,
}

/// Error from a single backend attempt.
#[derive(Debug)]
pub struct BackendError {
    pub retryable: bool,
    pub status: Option<u16>,
    pub message: String,
}

/// One backend attempt. Implementations must not retry internally; the
/// client owns the retry loop.
pub trait LlmBackend: Send + Sync {
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, BackendError>;
    /// Stable identity string recorded in run manifests.
    fn identity(&self) -> String;
}

/// A successful completion and how many attempts it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("unbound placeholder '{name}' in {kind} template")]
    UnboundPlaceholder { kind: String, name: String },
    #[error("transport failure after {attempts} attempts: {last}")]
    Transport {
        attempts: u32,
        last: String,
        log: Vec<String>,
    },
    #[error("protocol error (status {status}) after {attempts} attempts: {detail}")]
    Protocol {
        status: u16,
        detail: String,
        attempts: u32,
    },
    #[error("invalid llm configuration: {0}")]
    Config(String),
}

impl LlmError {
    pub fn attempts(&self) -> u32 {
        match self {
            LlmError::Transport { attempts, .. } | LlmError::Protocol { attempts, .. } => *attempts,
            _ => 0,
        }
    }
}

/// Simple token bucket; callers block until a token is available.
struct RateLimit {
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimit {
    fn new(per_second: f64) -> Self {
        RateLimit {
            per_second,
            state: Mutex::new((1.0, Instant::now())),
        }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limit lock");
                let (ref mut tokens, ref mut last) = *state;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.per_second)
                    .min(self.per_second.max(1.0));
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - *tokens) / self.per_second)
            };
            std::thread::sleep(wait);
        }
    }
}

/// Retry-aware client over any [`LlmBackend`].
pub struct LlmClient {
    backend: Box<dyn LlmBackend>,
    retries: u32,
    backoff: Duration,
    rate_limit: Option<RateLimit>,
}

impl LlmClient {
    pub fn new(backend: Box<dyn LlmBackend>, retries: u32, backoff: Duration) -> Self {
        LlmClient {
            backend,
            retries,
            backoff,
            rate_limit: None,
        }
    }

    /// Offline deterministic client; replies are pure functions of
    /// (script, seed, prompt). Zero backoff so tests never sleep.
    pub fn stub(script: StubScript, seed: u64) -> Self {
        let retries = 3;
        LlmClient::new(
            Box::new(StubBackend::new(script, seed)),
            retries,
            Duration::ZERO,
        )
    }

    /// HTTP client per `config`.
    pub fn http(config: LlmConfig) -> Result<Self, LlmError> {
        let retries = config.retries;
        let backoff = Duration::from_millis(config.backoff_ms);
        Ok(LlmClient::new(
            Box::new(HttpBackend::new(config)?),
            retries,
            backoff,
        ))
    }

    /// Cap request rate at `per_second` calls.
    pub fn with_rate_limit(mut self, per_second: f64) -> Self {
        if per_second > 0.0 {
            self.rate_limit = Some(RateLimit::new(per_second));
        }
        self
    }

    pub fn identity(&self) -> String {
        self.backend.identity()
    }

    /// Send a single-turn request, retrying transport and 5xx failures with
    /// exponential backoff. 4xx statuses are terminal.
    pub fn complete(
        &self,
        kind: PromptKind,
        bindings: &BTreeMap<String, String>,
    ) -> Result<Completion, LlmError> {
        let prompt = kind.instantiate(bindings)?;
        let request = ChatRequest {
            kind,
            prompt: &prompt,
            bindings,
        };
        let mut attempts = 0u32;
        let mut log = Vec::new();
        loop {
            attempts += 1;
            if let Some(limit) = &self.rate_limit {
                limit.acquire();
            }
            match self.backend.send(&request) {
                Ok(text) => return Ok(Completion { text, attempts }),
                Err(err) => {
                    log.push(format!("attempt {attempts}: {}", err.message));
                    if !err.retryable {
                        return Err(LlmError::Protocol {
                            status: err.status.unwrap_or(0),
                            detail: err.message,
                            attempts,
                        });
                    }
                    if attempts > self.retries {
                        return Err(LlmError::Transport {
                            attempts,
                            last: err.message,
                            log,
                        });
                    }
                    let delay = self.backoff * 2u32.saturating_pow(attempts - 1);
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
            }
        }
    }
}
