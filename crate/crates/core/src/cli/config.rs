use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{BackendConfig, Strategy};
use crate::bench::{JsonlFormat, LoadOptions};
use crate::orchestrator::{ClockMode, SessionConfig, SYSTEM_TEMPLATE};
use crate::script::SandboxLimits;

use super::CliError;

/// Declarative description of one benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub output_dir: PathBuf,
    pub cost_model: PathBuf,
    pub benchmark: BenchmarkSpec,
    pub backend: BackendSpec,
    #[serde(default)]
    pub session: SessionSpec,
}

fn default_workers() -> usize {
    1
}

/// Exactly one sample source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenchmarkSpec {
    /// Synthetic needle-in-a-haystack samples generated from the run seed.
    Sniah {
        count: usize,
        haystack_tokens: usize,
        #[serde(default)]
        name: Option<String>,
    },
    /// Samples read from a JSONL export.
    Jsonl {
        format: JsonlFormat,
        path: PathBuf,
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        filter_min_tokens: Option<u64>,
        #[serde(default)]
        filter_max_tokens: Option<u64>,
        #[serde(default)]
        take_first: Option<usize>,
        #[serde(default)]
        dataset: Option<String>,
        #[serde(default)]
        strict: bool,
    },
}

impl BenchmarkSpec {
    /// Name used in record conditions.
    pub fn name(&self) -> String {
        match self {
            BenchmarkSpec::Sniah { name, .. } => name.clone().unwrap_or_else(|| "sniah".into()),
            BenchmarkSpec::Jsonl {
                name,
                format,
                dataset,
                ..
            } => name.clone().unwrap_or_else(|| match (format, dataset) {
                (_, Some(d)) => d.clone(),
                (JsonlFormat::RulerNiah, None) => "ruler_niah".into(),
                (JsonlFormat::OolongExport, None) => "oolong".into(),
                (JsonlFormat::Native, None) => "native".into(),
            }),
        }
    }

    pub fn load_options(&self) -> LoadOptions {
        match self {
            BenchmarkSpec::Sniah { .. } => LoadOptions::default(),
            BenchmarkSpec::Jsonl {
                filter_min_tokens,
                filter_max_tokens,
                take_first,
                dataset,
                strict,
                ..
            } => {
                let mut o = LoadOptions {
                    take_first: *take_first,
                    dataset: dataset.clone(),
                    strict: *strict,
                    ..LoadOptions::default()
                };
                if let Some(min) = filter_min_tokens {
                    o.filter.min = *min;
                }
                if let Some(max) = filter_max_tokens {
                    o.filter.max = *max;
                }
                o
            }
        }
    }
}

fn default_mock_id() -> String {
    "mock".into()
}

fn default_replay_id() -> String {
    "replay".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    /// OpenAI-compatible endpoint; the key is read from `api_key_env`.
    Http(BackendConfig),
    /// Canned responses served in order.
    Replay {
        fixture: PathBuf,
        #[serde(default = "default_replay_id")]
        model_id: String,
    },
    /// Scripted offline agent.
    Rule {
        #[serde(default = "default_mock_id")]
        model_id: String,
        #[serde(flatten)]
        strategy: Strategy,
        #[serde(default)]
        latency_ms: u64,
    },
}

impl BackendSpec {
    pub fn model_id(&self) -> &str {
        match self {
            BackendSpec::Http(c) => &c.model_id,
            BackendSpec::Replay { model_id, .. } | BackendSpec::Rule { model_id, .. } => model_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSpec {
    pub depth: u32,
    pub max_iterations: u32,
    pub transcript_truncate: usize,
    pub token_ceiling: Option<u64>,
    pub clock: ClockMode,
    pub sandbox: SandboxLimits,
    /// Replaces the shipped system template.
    pub system_template: Option<PathBuf>,
}

impl Default for SessionSpec {
    fn default() -> Self {
        let base = SessionConfig::default();
        Self {
            depth: base.depth,
            max_iterations: base.max_iterations,
            transcript_truncate: base.transcript_truncate,
            token_ceiling: base.token_ceiling,
            clock: base.clock,
            sandbox: base.sandbox,
            system_template: None,
        }
    }
}

impl SessionSpec {
    pub fn to_session_config(&self) -> Result<SessionConfig, CliError> {
        let system_template = match &self.system_template {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("system template {}: {e}", path.display())))?,
            None => SYSTEM_TEMPLATE.to_string(),
        };
        let config = SessionConfig {
            depth: self.depth,
            max_iterations: self.max_iterations,
            transcript_truncate: self.transcript_truncate,
            sandbox: self.sandbox,
            system_template,
            token_ceiling: self.token_ceiling,
            clock: self.clock,
        };
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let text = String::from_utf8_lossy(&bytes);
        Ok((Self::from_toml_str(&text, path)?, bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = r#"
            seed = 7
            workers = 2
            output_dir = "runs/x"
            cost_model = "config/costs.toml"

            [benchmark]
            kind = "jsonl"
            format = "oolong_export"
            path = "data/oolong.jsonl"
            filter_min_tokens = 1024
            filter_max_tokens = 65536
            take_first = 20
            dataset = "trec_coarse"

            [backend]
            kind = "http"
            base_url = "https://api.deepseek.com/v1"
            model_id = "deepseek-chat"
            api_key_env = "DEEPSEEK_API_KEY"

            [session]
            depth = 2
            max_iterations = 12

            [session.sandbox]
            max_subcalls = 10
        "#;
        let c = RunConfig::from_toml_str(text, Path::new("x.toml")).unwrap();
        assert_eq!(c.benchmark.name(), "trec_coarse");
        let o = c.benchmark.load_options();
        assert_eq!(
            (o.filter.min, o.filter.max, o.take_first),
            (1024, 65536, Some(20))
        );
        assert_eq!(c.backend.model_id(), "deepseek-chat");
        let s = c.session.to_session_config().unwrap();
        assert_eq!((s.depth, s.max_iterations, s.sandbox.max_subcalls), (2, 12, 10));
        assert_eq!(s.sandbox.max_steps, 10_000);
        match &c.backend {
            BackendSpec::Http(b) => assert_eq!(b.timeout_secs, 600),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_rule_backends() {
        let text = r#"
            output_dir = "o"
            cost_model = "c"
            [benchmark]
            kind = "sniah"
            count = 3
            haystack_tokens = 64
            [backend]
            kind = "rule"
            strategy = "delegate-k"
            k = 2
        "#;
        let c = RunConfig::from_toml_str(text, Path::new("x.toml")).unwrap();
        assert_eq!(
            c.backend,
            BackendSpec::Rule {
                model_id: "mock".into(),
                strategy: Strategy::DelegateK { k: 2 },
                latency_ms: 0
            }
        );
        assert_eq!(c.workers, 1);
    }

    #[test]
    fn rejects_two_sources_and_typos() {
        let text = r#"
            output_dir = "o"
            cost_model = "c"
            [benchmark]
            kind = "sniah"
            count = 3
            haystack_tokens = 64
            path = "also.jsonl"
            [backend]
            kind = "rule"
            strategy = "echo"
        "#;
        assert!(matches!(
            RunConfig::from_toml_str(text, Path::new("x.toml")),
            Err(CliError::Config(_))
        ));
    }
}
