//! One recursive-inference session: call the model, parse its reply, run
//! its script blocks, feed the output back, repeat.
//!
//! Recursion depth counts REPL layers. Depth 0 is a single plain call.
//! Depth 1 gives the root a REPL whose `llm(...)` subcalls are plain calls.
//! Depth `d` gives subcalls their own REPL sessions with depth `d - 1`.

pub mod trace;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, ChatMessage, TokenUsage};
use crate::response::{strip_think_tags, FinalMarker, ParsedResponse};
use crate::script::{execute, parse_script, EnvError, Environment, SandboxLimits, SubcallError};
use trace::{digest, messages_digest};
pub use trace::{Termination, TraceEvent, TracePayload};

/// Version tag of the shipped system template.
pub const SYSTEM_TEMPLATE_VERSION: &str = "v1";

/// The shipped system template documenting the script language.
pub const SYSTEM_TEMPLATE: &str = include_str!("../../assets/system_template_v1.txt");

/// Task given to nested REPL sessions; the subcall text becomes their `prompt`.
pub const SUBCALL_DIRECTIVE: &str = "Answer the question contained in `prompt`.";

/// Tool message sent when a reply has neither a script block nor a marker.
pub const NO_ACTION_MESSAGE: &str = "No code block or FINAL marker found.";

pub fn template_hash(template: &str) -> String {
    digest(template.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Real elapsed time.
    #[default]
    Wall,
    /// Time advances only by the latency each backend reply reports, which
    /// makes timings reproducible under mock backends.
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// REPL layers remaining.
    pub depth: u32,
    pub max_iterations: u32,
    /// Code points of script output kept per turn.
    pub transcript_truncate: usize,
    pub sandbox: SandboxLimits,
    pub system_template: String,
    /// Total tokens across the whole session tree.
    pub token_ceiling: Option<u64>,
    pub clock: ClockMode,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            depth: 1,
            max_iterations: 30,
            transcript_truncate: 8_192,
            sandbox: SandboxLimits::default(),
            system_template: SYSTEM_TEMPLATE.to_string(),
            token_ceiling: None,
            clock: ClockMode::Wall,
        }
    }
}

impl SessionConfig {
    pub fn with_depth(depth: u32) -> Self {
        Self {
            depth,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.max_iterations < 1 {
            return Err(SessionError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.transcript_truncate < 128 {
            return Err(SessionError::InvalidConfig(
                "transcript_truncate must be at least 128".into(),
            ));
        }
        if self.sandbox.max_steps == 0 {
            return Err(SessionError::InvalidConfig("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("context cannot be loaded into the environment: {0}")]
    Context(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub answer: Option<String>,
    pub termination: Termination,
    pub trace: Vec<TraceEvent>,
    /// Sum of usage over every backend call in the tree.
    pub totals: TokenUsage,
    pub wall_time_ms: u64,
    /// Deepest REPL layer that actually ran (0 for a plain call).
    pub max_observed_depth: u32,
    /// Root-session model turns.
    pub iterations: u32,
    /// `llm(...)` subcalls across the whole tree.
    pub subcalls: u32,
    /// True if any backend reply carried estimated usage.
    pub usage_estimated: bool,
}

impl SessionResult {
    pub fn count_kind(&self, kind: &str) -> usize {
        self.trace.iter().filter(|e| e.kind() == kind).count()
    }
}

/// Runs one session to completion. Backend failures end the session with
/// [`Termination::BackendError`]; only invalid input is an `Err`.
pub fn run_session(
    task: &str,
    context: &str,
    config: &SessionConfig,
    backend: &dyn Backend,
) -> Result<SessionResult, SessionError> {
    config.validate()?;
    // Fail before any backend traffic when the context cannot be held.
    if config.depth > 0 {
        Environment::new(context, config.sandbox)?;
    }
    let mut tree = Tree {
        backend,
        config,
        clock: Clock::new(config.clock),
        trace: Vec::new(),
        totals: TokenUsage::default(),
        max_level: 0,
        subcalls: 0,
        estimated: false,
    };
    let outcome = if config.depth == 0 {
        tree.plain("root", 0, &format!("{task}\n\n{context}"))
    } else {
        tree.repl("root", config.depth, 1, task, context)
    };
    Ok(SessionResult {
        answer: outcome.answer,
        termination: outcome.termination,
        totals: tree.totals,
        wall_time_ms: tree.clock.now_ms(),
        max_observed_depth: tree.max_level,
        iterations: outcome.iterations,
        subcalls: tree.subcalls,
        usage_estimated: tree.estimated,
        trace: tree.trace,
    })
}

struct Clock {
    mode: ClockMode,
    started: Instant,
    simulated_ms: u64,
}

impl Clock {
    fn new(mode: ClockMode) -> Self {
        Self {
            mode,
            started: Instant::now(),
            simulated_ms: 0,
        }
    }

    fn now_ms(&self) -> u64 {
        match self.mode {
            ClockMode::Wall => self.started.elapsed().as_millis() as u64,
            ClockMode::Simulated => self.simulated_ms,
        }
    }

    fn advance(&mut self, ms: u64) {
        self.simulated_ms += ms;
    }
}

struct Outcome {
    answer: Option<String>,
    termination: Termination,
    iterations: u32,
}

/// State shared by every session in one tree.
struct Tree<'a> {
    backend: &'a dyn Backend,
    config: &'a SessionConfig,
    clock: Clock,
    trace: Vec<TraceEvent>,
    totals: TokenUsage,
    max_level: u32,
    subcalls: u32,
    estimated: bool,
}

impl Tree<'_> {
    fn emit(&mut self, path: &str, depth: u32, payload: TracePayload) {
        let event = TraceEvent {
            seq: self.trace.len() as u64,
            timestamp_ms: self.clock.now_ms(),
            path: path.to_string(),
            depth,
            payload,
        };
        self.trace.push(event);
    }

    fn ceiling_reached(&self) -> bool {
        self.config
            .token_ceiling
            .is_some_and(|ceiling| self.totals.total() >= ceiling)
    }

    /// One backend call, recorded. `Err` carries the error kind.
    fn call(&mut self, path: &str, depth: u32, messages: &[ChatMessage]) -> Result<String, String> {
        let request_digest = messages_digest(messages);
        match self.backend.chat(messages) {
            Ok(reply) => {
                self.clock.advance(reply.latency_ms);
                self.totals += reply.usage;
                self.estimated |= reply.estimated;
                self.emit(
                    path,
                    depth,
                    TracePayload::BackendCall {
                        request_digest,
                        messages: messages.len(),
                        response: Some(reply.text.clone()),
                        usage: Some(reply.usage),
                        latency_ms: reply.latency_ms,
                        estimated: reply.estimated,
                        error: None,
                    },
                );
                Ok(reply.text)
            }
            Err(err) => {
                tracing::warn!(path, error = %err, "backend call failed");
                self.emit(
                    path,
                    depth,
                    TracePayload::BackendCall {
                        request_digest,
                        messages: messages.len(),
                        response: None,
                        usage: None,
                        latency_ms: 0,
                        estimated: false,
                        error: Some(format!("{}: {err}", err.kind())),
                    },
                );
                Err(err.kind().to_string())
            }
        }
    }

    fn terminate(&mut self, path: &str, depth: u32, outcome: Outcome) -> Outcome {
        self.emit(
            path,
            depth,
            TracePayload::Termination {
                reason: outcome.termination,
                answer: outcome.answer.clone(),
                iterations: outcome.iterations,
            },
        );
        outcome
    }

    /// A single call without a REPL.
    fn plain(&mut self, path: &str, depth: u32, content: &str) -> Outcome {
        let outcome = match self.call(path, depth, &[ChatMessage::user(content)]) {
            Ok(text) => Outcome {
                answer: Some(strip_think_tags(&text)),
                termination: Termination::Final,
                iterations: 1,
            },
            Err(_) => Outcome {
                answer: None,
                termination: Termination::BackendError,
                iterations: 1,
            },
        };
        self.terminate(path, depth, outcome)
    }

    /// A REPL session with `depth >= 1` remaining; `level` is its REPL layer.
    fn repl(&mut self, path: &str, depth: u32, level: u32, task: &str, context: &str) -> Outcome {
        self.max_level = self.max_level.max(level);
        let limits = self.config.sandbox;
        let mut env = match Environment::new(context, limits) {
            Ok(env) => env,
            Err(e) => {
                // Only reachable for nested sessions; the root is checked up front.
                tracing::warn!(path, error = %e, "subcall context rejected");
                return self.terminate(
                    path,
                    depth,
                    Outcome {
                        answer: None,
                        termination: Termination::BackendError,
                        iterations: 0,
                    },
                );
            }
        };
        let mut messages = vec![
            ChatMessage::system(self.config.system_template.clone()),
            ChatMessage::user(task),
        ];
        let mut session_subcalls = 0u32;

        for iteration in 1..=self.config.max_iterations {
            if self.ceiling_reached() {
                return self.terminate(path, depth, stopped(Termination::TokenCeiling, iteration - 1));
            }
            let raw = match self.call(path, depth, &messages) {
                Ok(text) => text,
                Err(_) => return self.terminate(path, depth, stopped(Termination::BackendError, iteration)),
            };
            let parsed = ParsedResponse::parse(&raw);
            messages.push(ChatMessage::assistant(parsed.clean_text.clone()));

            if let Some(marker) = &parsed.final_marker {
                let answer = match marker {
                    FinalMarker::Final(text) => text.clone(),
                    FinalMarker::FinalVar(name) => match env.get(name) {
                        Some(value) => value.to_string(),
                        None => format!("ERROR: undefined variable {name}"),
                    },
                };
                return self.terminate(path, depth, finished(answer, iteration));
            }

            if parsed.code_blocks.is_empty() {
                messages.push(ChatMessage::tool(NO_ACTION_MESSAGE));
                continue;
            }

            let mut transcripts = Vec::with_capacity(parsed.code_blocks.len());
            for (block, source) in parsed.code_blocks.iter().enumerate() {
                let program = match parse_script(source) {
                    Ok(p) => p,
                    Err(e) => {
                        let line = format!("ERROR: parse error at {e}");
                        self.emit(
                            path,
                            depth,
                            TracePayload::ScriptExec {
                                block,
                                source: source.clone(),
                                transcript: line.clone(),
                                final_value: None,
                                steps_used: 0,
                                subcalls_made: 0,
                                parse_error: Some(e.to_string()),
                                budget_exceeded: None,
                            },
                        );
                        transcripts.push(line);
                        continue;
                    }
                };
                let result = {
                    let mut hook = |text: &str| self.subcall(path, depth, level, &mut session_subcalls, text);
                    execute(&program, &mut env, &limits, &mut hook)
                };
                let (outcome, budget) = match result {
                    Ok(o) => (o, None),
                    Err(b) => (b.outcome, Some(b.kind)),
                };
                self.emit(
                    path,
                    depth,
                    TracePayload::ScriptExec {
                        block,
                        source: source.clone(),
                        transcript: outcome.transcript.clone(),
                        final_value: outcome.final_value.clone(),
                        steps_used: outcome.steps_used,
                        subcalls_made: outcome.subcalls_made,
                        parse_error: None,
                        budget_exceeded: budget,
                    },
                );
                if let Some(answer) = outcome.final_value {
                    return self.terminate(path, depth, finished(answer, iteration));
                }
                transcripts.push(outcome.transcript);
            }

            let joined = transcripts.join("\n");
            let body = if joined.trim().is_empty() {
                "(no output)".to_string()
            } else {
                truncate_transcript(&joined, self.config.transcript_truncate)
            };
            messages.push(ChatMessage::tool(body));
        }
        let iterations = self.config.max_iterations;
        if self.ceiling_reached() {
            return self.terminate(path, depth, stopped(Termination::TokenCeiling, iterations));
        }
        self.terminate(path, depth, stopped(Termination::IterationsExhausted, iterations))
    }

    /// Implements `llm(text)` for a session at `depth` / `level`.
    fn subcall(
        &mut self,
        path: &str,
        depth: u32,
        level: u32,
        session_subcalls: &mut u32,
        text: &str,
    ) -> Result<String, SubcallError> {
        if *session_subcalls >= self.config.sandbox.max_subcalls {
            return Err(SubcallError::CapExceeded(self.config.sandbox.max_subcalls));
        }
        if self.ceiling_reached() {
            return Err(SubcallError::Refused("token ceiling reached".into()));
        }
        *session_subcalls += 1;
        self.subcalls += 1;
        let child_path = format!("{path}.{session_subcalls}");
        let child_depth = depth - 1;
        self.emit(
            path,
            depth,
            TracePayload::SubcallSpawn {
                child_path: child_path.clone(),
                child_depth,
                prompt_digest: digest(text.as_bytes()),
                prompt_chars: text.chars().count(),
            },
        );
        let outcome = if child_depth == 0 {
            self.plain(&child_path, 0, text)
        } else {
            self.repl(&child_path, child_depth, level + 1, SUBCALL_DIRECTIVE, text)
        };
        Ok(match outcome.answer {
            Some(answer) if outcome.termination == Termination::Final => answer,
            _ => format!("ERROR: subcall failed ({})", outcome.termination),
        })
    }
}

fn finished(answer: String, iterations: u32) -> Outcome {
    Outcome {
        answer: Some(answer),
        termination: Termination::Final,
        iterations,
    }
}

fn stopped(termination: Termination, iterations: u32) -> Outcome {
    Outcome {
        answer: None,
        termination,
        iterations,
    }
}

/// Keeps the first `limit` code points and notes how many were dropped.
pub fn truncate_transcript(text: &str, limit: usize) -> String {
    let total = text.chars().count();
    if total <= limit {
        return text.to_string();
    }
    let cut = text.char_indices().nth(limit).map_or(text.len(), |(i, _)| i);
    format!("{}...[truncated {} chars]", &text[..cut], total - limit)
}
