//! The sandboxed script language in which the long prompt lives as the
//! variable `prompt`.
//!
//! A session's root model emits small programs in this language. Programs
//! can inspect, slice, search and split text, and issue recursive model
//! calls through `llm(...)`. There are no loops, conditionals, files,
//! sockets or clocks; the only external effect is the [`SubcallHook`].
//!
//! The grammar and builtin semantics are documented in
//! `docs/script-language.md`.

mod exec;
mod lexer;
mod parser;
pub mod pattern;
mod value;

pub use exec::{execute, BudgetExceeded, BudgetKind, ExecOutcome, SubcallError, SubcallHook};
pub use parser::{parse_script, Expr, ParseError, ScriptProgram, Statement, BUILTINS};
pub use value::{EnvError, Environment, Value};

use serde::{Deserialize, Serialize};

/// Resource limits applied to every script execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxLimits {
    /// Statements plus evaluated expression nodes, per execution.
    pub max_steps: u64,
    /// Largest Text value, in bytes.
    pub max_value_bytes: usize,
    /// Largest List value, in elements.
    pub max_list_len: usize,
    /// Sum of all bound values, in bytes.
    pub max_env_bytes: usize,
    /// `llm(...)` calls allowed per session.
    pub max_subcalls: u32,
    /// Output kept per execution; later output is dropped with a notice.
    pub max_transcript_bytes: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            max_steps: 10_000,
            max_value_bytes: 16 * 1024 * 1024,
            max_list_len: 100_000,
            max_env_bytes: 256 * 1024 * 1024,
            max_subcalls: 50,
            max_transcript_bytes: 1024 * 1024,
        }
    }
}
