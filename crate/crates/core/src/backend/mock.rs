//! Deterministic offline backends.
//!
//! A replay backend serves canned responses in order. A rule agent derives
//! every response from the conversation it is handed, so it behaves the same
//! no matter how sessions are scheduled.
//!
//! Rule agents tell the two calling modes apart by the first message: a
//! REPL session always opens with the system template, while plain calls
//! (depth 0 and leaf subcalls) carry no system message.

use std::fs;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{estimate_usage, Backend, BackendError, BackendReply, ChatMessage, Role, TokenUsage};

/// One line of a replay fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(default)]
    pub latency_ms: u64,
    /// Marks usage that was estimated when the response was recorded.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub estimated: bool,
}

impl ReplayEntry {
    pub fn new(text: impl Into<String>, input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            text: text.into(),
            input_tokens,
            output_tokens,
            latency_ms: 0,
            estimated: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("fixture {path} line {line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

pub fn load_replay_fixture(path: &Path) -> Result<Vec<ReplayEntry>, FixtureError> {
    let shown = path.display().to_string();
    let raw = fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: shown.clone(),
        source,
    })?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| FixtureError::Malformed {
                path: shown.clone(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Serves fixture entries in order, one per `chat` call.
#[derive(Debug)]
pub struct ReplayBackend {
    model_id: String,
    entries: Vec<ReplayEntry>,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(model_id: impl Into<String>, entries: Vec<ReplayEntry>) -> Self {
        Self {
            model_id: model_id.into(),
            entries,
            cursor: Mutex::new(0),
        }
    }

    pub fn served(&self) -> usize {
        *self.cursor.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Backend for ReplayBackend {
    fn chat(&self, _messages: &[ChatMessage]) -> Result<BackendReply, BackendError> {
        let mut cursor = self.cursor.lock().unwrap_or_else(|e| e.into_inner());
        let entry = self
            .entries
            .get(*cursor)
            .ok_or(BackendError::FixtureExhausted { served: *cursor })?;
        *cursor += 1;
        Ok(BackendReply {
            text: entry.text.clone(),
            usage: TokenUsage::new(entry.input_tokens, entry.output_tokens),
            latency_ms: entry.latency_ms,
            estimated: entry.estimated,
        })
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// Behaviours a [`RuleAgent`] can play.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum Strategy {
    /// Greps the prompt for the needle sentence, then answers with it. In
    /// plain mode it reads the needle straight out of the message.
    GrepNeedle {
        /// Overrides the pattern derived from the question.
        #[serde(default)]
        pattern: Option<String>,
    },
    /// Prints forever and never answers.
    InfiniteLoop,
    /// Issues `k` subcalls in one script, then answers with the first reply.
    DelegateK { k: u32 },
    /// Answers `X` to a message ending in "say X"; otherwise echoes it.
    Echo,
}

/// A stateless scripted agent.
#[derive(Debug, Clone)]
pub struct RuleAgent {
    model_id: String,
    strategy: Strategy,
    latency_ms: u64,
}

impl RuleAgent {
    pub fn new(model_id: impl Into<String>, strategy: Strategy) -> Self {
        Self {
            model_id: model_id.into(),
            strategy,
            latency_ms: 0,
        }
    }

    /// Reported per-call latency; drives simulated clocks.
    pub fn with_latency_ms(mut self, latency_ms: u64) -> Self {
        self.latency_ms = latency_ms;
        self
    }

    fn respond(&self, messages: &[ChatMessage]) -> String {
        let repl_mode = messages.first().is_some_and(|m| m.role == Role::System);
        let turn = messages.iter().filter(|m| m.role == Role::Assistant).count();
        let task = messages
            .iter()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str());
        let last = messages.last().map_or("", |m| m.content.as_str());

        match (&self.strategy, repl_mode) {
            (Strategy::GrepNeedle { pattern }, true) => match turn {
                0 => {
                    let pattern = pattern.clone().unwrap_or_else(|| needle_pattern(task));
                    format!(
                        "I'll search the prompt for the needle.\n```repl\nhits = findall(prompt, \"{}\")\nprint(len(hits))\nprint(hits)\n```",
                        escape_literal(&pattern)
                    )
                }
                1 => "```repl\nvalue = get(findall(get(hits, 0), \"[0-9]+\"), 0)\nprint(value)\n```"
                    .to_string(),
                _ => "The value is stored in `value`.\nFINAL_VAR(value)".to_string(),
            },
            (Strategy::GrepNeedle { .. }, false) => match find_needle(last, task) {
                Some(value) => format!("The special magic number is {value}."),
                None => "I could not find a special magic number in the text.".to_string(),
            },
            (Strategy::InfiniteLoop, true) => {
                format!("Still checking.\n```repl\nprint(\"pass {turn}\")\n```")
            }
            (Strategy::InfiniteLoop, false) => "Still checking.".to_string(),
            (Strategy::DelegateK { k }, true) => {
                if turn == 0 {
                    let mut script = String::from("part = peek(prompt, 200)\n");
                    for i in 1..=*k {
                        script.push_str(&format!("r{i} = llm(\"Part {i}: \" + part)\n"));
                    }
                    if *k > 0 {
                        script.push_str("print(r1)\n");
                    }
                    format!("Delegating to {k} sub-calls.\n```repl\n{script}```")
                } else if *k > 0 {
                    "FINAL_VAR(r1)".to_string()
                } else {
                    "FINAL(\"no delegation\")".to_string()
                }
            }
            (Strategy::DelegateK { .. }, false) => {
                let head: String = last.chars().take(32).collect();
                format!("leaf reply to: {head}")
            }
            (Strategy::Echo, _) => match last.trim_end().rsplit_once("say ") {
                Some((_, word)) if !word.contains(char::is_whitespace) => word.to_string(),
                _ => last.to_string(),
            },
        }
    }
}

impl Backend for RuleAgent {
    fn chat(&self, messages: &[ChatMessage]) -> Result<BackendReply, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::InvalidRequest("no messages".into()));
        }
        let text = self.respond(messages);
        let usage = estimate_usage(messages, &text);
        Ok(BackendReply {
            text,
            usage,
            latency_ms: self.latency_ms,
            estimated: true,
        })
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

fn question_key(task: &str) -> Option<&str> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re =
        RE.get_or_init(|| Regex::new(r"magic numbers? for ([^?\n]+?)(?: mentioned| in the|\?|$)").unwrap());
    re.captures(task).map(|c| c.get(1).unwrap().as_str().trim())
}

/// Pattern-language escape for literal text.
fn escape_pattern(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if ".*+?|()[]^$\\{}".contains(c) {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Script string-literal escape.
fn escape_literal(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

fn needle_pattern(task: &str) -> String {
    match question_key(task) {
        Some(key) => format!("magic number for {} is [0-9]+", escape_pattern(key)),
        None => "magic number for [^.]* is [0-9]+".to_string(),
    }
}

fn find_needle(text: &str, task: &str) -> Option<String> {
    let key = question_key(task).map(regex::escape);
    let pattern = match key {
        Some(k) => format!(r"magic number for {k} is (\d+)"),
        None => r"magic number for [^.]* is (\d+)".to_string(),
    };
    Regex::new(&pattern)
        .ok()?
        .captures(text)
        .map(|c| c[1].to_string())
}

/// What [`make_mock_backend`] should build.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockScript {
    Replay(Vec<ReplayEntry>),
    RuleAgent(Strategy),
}

pub fn make_mock_backend(model_id: &str, script: MockScript) -> Box<dyn Backend> {
    match script {
        MockScript::Replay(entries) => Box::new(ReplayBackend::new(model_id, entries)),
        MockScript::RuleAgent(strategy) => Box::new(RuleAgent::new(model_id, strategy)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_serves_in_order_then_exhausts() {
        let backend = make_mock_backend(
            "mock",
            MockScript::Replay(vec![ReplayEntry::new("one", 1, 2), ReplayEntry::new("two", 3, 4)]),
        );
        let msgs = [ChatMessage::user("hi")];
        assert_eq!(backend.chat(&msgs).unwrap().text, "one");
        let second = backend.chat(&msgs).unwrap();
        assert_eq!(second.text, "two");
        assert_eq!(second.usage, TokenUsage::new(3, 4));
        assert_eq!(
            backend.chat(&msgs).unwrap_err(),
            BackendError::FixtureExhausted { served: 2 }
        );
    }

    #[test]
    fn echo_says_pong() {
        let echo = RuleAgent::new("mock", Strategy::Echo);
        let reply = echo.chat(&[ChatMessage::user("please say PONG")]).unwrap();
        assert_eq!(reply.text, "PONG");
        assert_eq!(reply.usage, TokenUsage::new(4, 1));
    }

    #[test]
    fn rule_agents_are_deterministic() {
        let agent = RuleAgent::new("mock", Strategy::DelegateK { k: 2 });
        let msgs = [ChatMessage::system("template"), ChatMessage::user("task")];
        assert_eq!(agent.chat(&msgs).unwrap(), agent.chat(&msgs).unwrap());
    }

    #[test]
    fn grep_needle_plain_mode_reads_the_needle() {
        let agent = RuleAgent::new("mock", Strategy::GrepNeedle { pattern: None });
        let msg = "What is the special magic number for lantern mentioned in the provided text?\n\n\
                   Filler. The special magic number for harbor is 1111111. \
                   The special magic number for lantern is 7412905. More filler.";
        let reply = agent.chat(&[ChatMessage::user(msg)]).unwrap();
        assert_eq!(reply.text, "The special magic number is 7412905.");
    }

    #[test]
    fn grep_needle_repl_mode_emits_a_findall_script() {
        let agent = RuleAgent::new("mock", Strategy::GrepNeedle { pattern: None });
        let msgs = [
            ChatMessage::system("template"),
            ChatMessage::user("What is the special magic number for lantern mentioned in the provided text?"),
        ];
        let reply = agent.chat(&msgs).unwrap().text;
        assert!(reply.contains("```repl\nhits = findall(prompt, \"magic number for lantern is [0-9]+\")"));
    }

    #[test]
    fn fixture_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        fs::write(
            &path,
            "{\"text\":\"a\",\"input_tokens\":1,\"output_tokens\":2,\"latency_ms\":5}\n\n{\"text\":\"b\",\"input_tokens\":3,\"output_tokens\":4}\n",
        )
        .unwrap();
        let entries = load_replay_fixture(&path).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].latency_ms, 5);
        fs::write(&path, "{\"text\":1}\n").unwrap();
        assert!(matches!(
            load_replay_fixture(&path),
            Err(FixtureError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn strategy_config_shape() {
        let s: Strategy = serde_json::from_str(r#"{"strategy":"delegate-k","k":3}"#).unwrap();
        assert_eq!(s, Strategy::DelegateK { k: 3 });
        let s: Strategy = serde_json::from_str(r#"{"strategy":"grep-needle"}"#).unwrap();
        assert_eq!(s, Strategy::GrepNeedle { pattern: None });
    }
}
