use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{estimate_usage, Backend, BackendError, BackendReply, ChatMessage, Role, TokenUsage};

/// Connection settings for an OpenAI-compatible endpoint. The API key is
/// never stored here, only the name of the variable that holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub base_url: String,
    pub model_id: String,
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// First backoff delay for 429 retries; doubles each attempt.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    /// Concurrent in-flight requests allowed through one backend.
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
    /// Sampling parameters are passed through untouched; `None` leaves the
    /// provider default in place.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

fn default_timeout_secs() -> u64 {
    600
}

fn default_max_retries() -> u32 {
    3
}

fn default_retry_base_ms() -> u64 {
    1000
}

fn default_max_concurrent() -> usize {
    4
}

impl BackendConfig {
    pub fn new(
        base_url: impl Into<String>,
        model_id: impl Into<String>,
        api_key_env: impl Into<String>,
    ) -> Self {
        Self {
            base_url: base_url.into(),
            model_id: model_id.into(),
            api_key_env: api_key_env.into(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            retry_base_ms: default_retry_base_ms(),
            max_concurrent: default_max_concurrent(),
            temperature: None,
            max_tokens: None,
        }
    }

    /// DeepSeek's hosted chat model.
    pub fn deepseek() -> Self {
        Self::new("https://api.deepseek.com/v1", "deepseek-chat", "DEEPSEEK_API_KEY")
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn api_key(&self) -> Result<String, BackendError> {
        match std::env::var(&self.api_key_env) {
            Ok(key) if !key.trim().is_empty() => Ok(key),
            _ => Err(BackendError::Auth(format!(
                "environment variable {} is not set",
                self.api_key_env
            ))),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct RequestLimiter {
    available: Mutex<usize>,
    freed: Condvar,
}

impl RequestLimiter {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *available == 0 {
            available = self.freed.wait(available).unwrap_or_else(|e| e.into_inner());
        }
        *available -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a RequestLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut available = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *available += 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    limiter: Arc<RequestLimiter>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let limiter = Arc::new(RequestLimiter::new(config.max_concurrent));
        Ok(Self {
            config,
            client,
            limiter,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn request_body(&self, messages: &[ChatMessage]) -> Json {
        // Chat-completions only accepts `tool` messages that answer a native
        // tool call, so REPL output travels as a user turn.
        let wire: Vec<Json> = messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::Tool => Role::User,
                    r => r,
                };
                json!({ "role": role.to_string(), "content": m.content })
            })
            .collect();
        let mut body = json!({ "model": self.config.model_id, "messages": wire });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(m) = self.config.max_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }

    fn send_once(&self, key: &str, body: &Json) -> Result<Json, Attempt> {
        let response = self
            .client
            .post(self.config.endpoint())
            .bearer_auth(key)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Attempt::Fatal(BackendError::Timeout(self.config.timeout_secs))
                } else {
                    Attempt::Fatal(BackendError::Transport(e.to_string()))
                }
            })?;
        let status = response.status().as_u16();
        match status {
            200..=299 => response
                .json::<Json>()
                .map_err(|e| Attempt::Fatal(BackendError::Transport(format!("bad response body: {e}")))),
            401 | 403 => Err(Attempt::Fatal(BackendError::Auth(format!("HTTP {status}")))),
            429 => Err(Attempt::Retry),
            _ => {
                let mut body = response.text().unwrap_or_default();
                if body.len() > 2048 {
                    let cut = (0..=2048).rev().find(|i| body.is_char_boundary(*i)).unwrap_or(0);
                    body.truncate(cut);
                }
                Err(Attempt::Fatal(BackendError::Provider { status, body }))
            }
        }
    }
}

enum Attempt {
    Retry,
    Fatal(BackendError),
}

fn parse_reply(json: &Json, messages: &[ChatMessage]) -> Result<(String, TokenUsage, bool), BackendError> {
    if json["choices"][0].is_null() {
        return Err(BackendError::Transport("response has no choices".into()));
    }
    let text = match &json["choices"][0]["message"]["content"] {
        Json::String(s) => s.clone(),
        Json::Null => String::new(),
        other => {
            return Err(BackendError::Transport(format!(
                "unexpected message content: {other}"
            )))
        }
    };
    let usage = &json["usage"];
    match (
        usage["prompt_tokens"].as_u64(),
        usage["completion_tokens"].as_u64(),
    ) {
        (Some(input), Some(output)) => Ok((text, TokenUsage::new(input, output), false)),
        _ => {
            let estimated = estimate_usage(messages, &text);
            Ok((text, estimated, true))
        }
    }
}

impl Backend for HttpBackend {
    fn chat(&self, messages: &[ChatMessage]) -> Result<BackendReply, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::InvalidRequest("no messages".into()));
        }
        let key = self.config.api_key()?;
        let body = self.request_body(messages);
        let _permit = self.limiter.acquire();
        let started = Instant::now();
        let mut retries = 0u32;
        loop {
            match self.send_once(&key, &body) {
                Ok(json) => {
                    let (text, usage, estimated) = parse_reply(&json, messages)?;
                    if estimated {
                        tracing::warn!(model = %self.config.model_id, "provider omitted usage; estimating tokens");
                    }
                    return Ok(BackendReply {
                        text,
                        usage,
                        latency_ms: started.elapsed().as_millis() as u64,
                        estimated,
                    });
                }
                Err(Attempt::Retry) if retries < self.config.max_retries => {
                    let delay = self.config.retry_base_ms.saturating_mul(1 << retries.min(16));
                    tracing::debug!(retries, delay, "rate limited; backing off");
                    std::thread::sleep(Duration::from_millis(delay));
                    retries += 1;
                }
                Err(Attempt::Retry) => return Err(BackendError::RateLimited { retries }),
                Err(Attempt::Fatal(e)) => return Err(e),
            }
        }
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }
}

/// One-shot chat against `config`.
pub fn chat(config: &BackendConfig, messages: &[ChatMessage]) -> Result<BackendReply, BackendError> {
    config.api_key()?;
    HttpBackend::new(config.clone())?.chat(messages)
}
