//! Uniform model-call abstraction.
//!
//! [`HttpBackend`] talks to OpenAI-compatible chat-completions endpoints.
//! [`mock`] provides fully deterministic offline backends for tests and
//! desk-scale runs.

mod http;
pub mod mock;

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{chat, BackendConfig, HttpBackend};
pub use mock::{
    load_replay_fixture, make_mock_backend, FixtureError, MockScript, ReplayBackend, ReplayEntry, RuleAgent,
    Strategy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }

    pub fn tool(content: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            input_tokens,
            output_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: Self) -> Self {
        TokenUsage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendReply {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
    /// True when `usage` was estimated rather than reported by the provider.
    pub estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {retries} retries")]
    RateLimited { retries: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("request timed out after {0} s")]
    Timeout(u64),
    #[error("replay fixture exhausted after {served} responses")]
    FixtureExhausted { served: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Short machine-readable kind, used in traces.
    pub fn kind(&self) -> &'static str {
        match self {
            BackendError::Auth(_) => "auth",
            BackendError::RateLimited { .. } => "rate_limited",
            BackendError::Transport(_) => "transport",
            BackendError::Provider { .. } => "provider",
            BackendError::Timeout(_) => "timeout",
            BackendError::FixtureExhausted { .. } => "fixture_exhausted",
            BackendError::InvalidRequest(_) => "invalid_request",
        }
    }
}

/// A chat-completion endpoint. Implementations are shared across
/// concurrently running sessions.
pub trait Backend: Send + Sync {
    fn chat(&self, messages: &[ChatMessage]) -> Result<BackendReply, BackendError>;

    /// Identifier used for cost lookup and record grouping.
    fn model_id(&self) -> &str;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn chat(&self, messages: &[ChatMessage]) -> Result<BackendReply, BackendError> {
        (**self).chat(messages)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn chat(&self, messages: &[ChatMessage]) -> Result<BackendReply, BackendError> {
        (**self).chat(messages)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

/// Fallback token count when a provider omits usage: ceil(code points / 4).
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Estimated usage for a request/response pair.
pub fn estimate_usage(messages: &[ChatMessage], reply: &str) -> TokenUsage {
    let input: u64 = messages.iter().map(|m| estimate_tokens(&m.content)).sum();
    TokenUsage::new(input, estimate_tokens(reply))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimation_rounds_up_code_points() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        assert_eq!(estimate_tokens("éééé"), 1);
    }

    #[test]
    fn usage_adds_componentwise() {
        let mut u = TokenUsage::new(1, 2);
        u += TokenUsage::new(10, 20);
        assert_eq!(u, TokenUsage::new(11, 22));
        assert_eq!(u.total(), 33);
    }

    #[test]
    fn roles_serialize_lowercase() {
        let m = ChatMessage::tool("out");
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"role":"tool","content":"out"}"#
        );
    }
}
