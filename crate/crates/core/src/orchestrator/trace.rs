//! Trace events and their JSONL form.
//!
//! Every backend call, script execution, subcall spawn and session
//! termination is appended to one flat, totally ordered list. Nested
//! sessions are distinguished by `path`: `root`, `root.1` for the first
//! subcall of the root, `root.1.2` for the second subcall of that child.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{ChatMessage, TokenUsage};
use crate::script::BudgetKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Final,
    IterationsExhausted,
    TokenCeiling,
    BackendError,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Final => "final",
            Termination::IterationsExhausted => "iterations_exhausted",
            Termination::TokenCeiling => "token_ceiling",
            Termination::BackendError => "backend_error",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum TracePayload {
    BackendCall {
        request_digest: String,
        messages: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        response: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        usage: Option<TokenUsage>,
        latency_ms: u64,
        estimated: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    ScriptExec {
        block: usize,
        source: String,
        transcript: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        final_value: Option<String>,
        steps_used: u64,
        subcalls_made: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parse_error: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget_exceeded: Option<BudgetKind>,
    },
    SubcallSpawn {
        child_path: String,
        child_depth: u32,
        prompt_digest: String,
        prompt_chars: usize,
    },
    Termination {
        reason: Termination,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<String>,
        iterations: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    /// Milliseconds since the root session started, on the run's clock.
    pub timestamp_ms: u64,
    pub path: String,
    /// Recursion budget of the session that emitted the event.
    pub depth: u32,
    #[serde(flatten)]
    pub payload: TracePayload,
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self.payload {
            TracePayload::BackendCall { .. } => "backend_call",
            TracePayload::ScriptExec { .. } => "script_exec",
            TracePayload::SubcallSpawn { .. } => "subcall_spawn",
            TracePayload::Termination { .. } => "termination",
        }
    }

    /// Number of subcall hops below the root.
    pub fn nesting(&self) -> usize {
        self.path.matches('.').count()
    }
}

pub fn digest(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    hex::encode(&hash[..8])
}

pub fn messages_digest(messages: &[ChatMessage]) -> String {
    let json = serde_json::to_vec(messages).unwrap_or_default();
    digest(&json)
}

pub fn write_trace_jsonl(path: &Path, events: &[TraceEvent]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum TraceReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

pub fn read_trace_jsonl(path: &Path) -> Result<Vec<TraceEvent>, TraceReadError> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(
            serde_json::from_str(&line).map_err(|e| TraceReadError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(events)
}

fn indent_block(out: &mut String, indent: &str, text: &str) {
    for line in text.lines() {
        let _ = writeln!(out, "{indent}  | {line}");
    }
}

/// Human-readable transcript of a trace, nested sessions indented.
pub fn render_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for event in events {
        let indent = "    ".repeat(event.nesting());
        let head = format!(
            "{indent}[{} +{}ms {} depth={}]",
            event.seq, event.timestamp_ms, event.path, event.depth
        );
        match &event.payload {
            TracePayload::BackendCall {
                response,
                usage,
                latency_ms,
                error,
                ..
            } => {
                let usage = usage.map_or("-".to_string(), |u| {
                    format!("{} in / {} out", u.input_tokens, u.output_tokens)
                });
                let _ = writeln!(out, "{head} backend call ({usage}, {latency_ms} ms)");
                if let Some(text) = response {
                    indent_block(&mut out, &indent, text);
                }
                if let Some(err) = error {
                    let _ = writeln!(out, "{indent}  ! {err}");
                }
            }
            TracePayload::ScriptExec {
                block,
                source,
                transcript,
                final_value,
                steps_used,
                parse_error,
                ..
            } => {
                let _ = writeln!(out, "{head} script block {block} ({steps_used} steps)");
                indent_block(&mut out, &indent, source);
                if let Some(err) = parse_error {
                    let _ = writeln!(out, "{indent}  ! parse error: {err}");
                }
                if !transcript.is_empty() {
                    let _ = writeln!(out, "{indent}  output:");
                    indent_block(&mut out, &indent, transcript);
                }
                if let Some(v) = final_value {
                    let _ = writeln!(out, "{indent}  final: {v}");
                }
            }
            TracePayload::SubcallSpawn {
                child_path,
                child_depth,
                prompt_chars,
                ..
            } => {
                let _ = writeln!(
                    out,
                    "{head} spawn {child_path} (depth {child_depth}, {prompt_chars} chars)"
                );
            }
            TracePayload::Termination {
                reason,
                answer,
                iterations,
            } => {
                let answer = answer.as_deref().unwrap_or("<none>");
                let _ = writeln!(
                    out,
                    "{head} end: {reason} after {iterations} iteration(s); answer: {answer}"
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<TraceEvent> {
        vec![
            TraceEvent {
                seq: 0,
                timestamp_ms: 0,
                path: "root".into(),
                depth: 2,
                payload: TracePayload::SubcallSpawn {
                    child_path: "root.1".into(),
                    child_depth: 1,
                    prompt_digest: digest(b"x"),
                    prompt_chars: 1,
                },
            },
            TraceEvent {
                seq: 1,
                timestamp_ms: 3,
                path: "root.1".into(),
                depth: 1,
                payload: TracePayload::Termination {
                    reason: Termination::Final,
                    answer: Some("42".into()),
                    iterations: 2,
                },
            },
        ]
    }

    #[test]
    fn jsonl_shape_is_flat() {
        let line = serde_json::to_string(&sample()[1]).unwrap();
        assert_eq!(
            line,
            r#"{"seq":1,"timestamp_ms":3,"path":"root.1","depth":1,"kind":"termination","payload":{"reason":"final","answer":"42","iterations":2}}"#
        );
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_trace_jsonl(&path, &sample()).unwrap();
        assert_eq!(read_trace_jsonl(&path).unwrap(), sample());
    }

    #[test]
    fn rendering_indents_children() {
        let text = render_trace(&sample());
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("[0 +0ms root"));
        assert!(lines[1].starts_with("    [1 +3ms root.1"));
        assert!(lines[1].contains("answer: 42"));
    }
}
