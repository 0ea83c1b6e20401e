//! HTTP chat-completion backend.
//!
//! Wire shape: POST with a JSON body `{model, messages, temperature,
//! max_tokens}`; the reply text is the first choice's message content. Any
//! endpoint speaking that shape works via configuration alone.

use std::time::Duration;

use serde_json::json;

use super::{BackendError, ChatRequest, LlmBackend, LlmConfig, LlmError};

/// One plain JSON POST with optional bearer auth from an environment
/// variable. Returns the status and raw body; transport failures carry a
/// retryability hint. This is the crate's single raw HTTP entry point.
pub fn post_json(
    endpoint: &str,
    auth_env: Option<&str>,
    body: &serde_json::Value,
    timeout: Duration,
) -> Result<(u16, String), BackendError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| BackendError {
            retryable: false,
            status: None,
            message: format!("failed to build http client: {e}"),
        })?;
    let mut req = client.post(endpoint).json(body);
    if let Some(key) = auth_env.and_then(|name| std::env::var(name).ok()) {
        req = req.bearer_auth(key);
    }
    let response = req.send().map_err(|e| BackendError {
        retryable: true,
        status: None,
        message: format!("transport: {e}"),
    })?;
    let status = response.status();
    let text = response.text().map_err(|e| BackendError {
        retryable: true,
        status: Some(status.as_u16()),
        message: format!("body read: {e}"),
    })?;
    Ok((status.as_u16(), text))
}

pub struct HttpBackend {
    config: LlmConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        if config.endpoint.is_empty() {
            return Err(LlmError::Config("endpoint must not be empty".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| LlmError::Config(format!("failed to build http client: {e}")))?;
        Ok(HttpBackend { config, client })
    }

    fn api_key(&self) -> Option<String> {
        self.config
            .auth_env
            .as_ref()
            .and_then(|name| std::env::var(name).ok())
    }
}

impl LlmBackend for HttpBackend {
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let temperature = if request.kind.wants_deterministic_sampling() {
            0.0
        } else {
            self.config.temperature
        };
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": temperature,
            "max_tokens": self.config.max_tokens,
        });
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = self.api_key() {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| BackendError {
            retryable: true,
            status: None,
            message: format!("transport: {e}"),
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| BackendError {
            retryable: true,
            status: Some(status.as_u16()),
            message: format!("body read: {e}"),
        })?;
        if !status.is_success() {
            return Err(BackendError {
                // 5xx is transient; 4xx means the request itself is wrong.
                retryable: status.is_server_error(),
                status: Some(status.as_u16()),
                message: format!("status {}: {}", status.as_u16(), truncate(&text, 200)),
            });
        }
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| BackendError {
            retryable: false,
            status: Some(status.as_u16()),
            message: format!("response is not JSON: {e}"),
        })?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(|s| s.to_string())
            .ok_or_else(|| BackendError {
                retryable: false,
                status: Some(status.as_u16()),
                message: "response lacks choices[0].message.content".to_string(),
            })
    }

    fn identity(&self) -> String {
        format!("http({} model={})", self.config.endpoint, self.config.model)
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}
