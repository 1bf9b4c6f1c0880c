use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{
    load_replay_fixture, Backend, BackendConfig, HttpBackend, ReplayBackend, ReplayEntry, RuleAgent,
};
use crate::bench::{generate_sniah, load_jsonl, score_answer, BenchSample, LoadError};
use crate::metrics::{
    aggregate, compute_cost, render_rows_table, tag_failures, write_records_jsonl, Condition, CostModel,
    GroupBy, RecordSink, SampleRecord,
};
use crate::orchestrator::{
    run_session, template_hash, trace::write_trace_jsonl, SessionConfig, TracePayload,
    SYSTEM_TEMPLATE_VERSION,
};

use super::config::{BackendSpec, BenchmarkSpec, RunConfig};
use super::CliError;

/// Overrides the worker count from the config; `--workers` wins over it.
pub const WORKERS_ENV: &str = "RLM_FORGE_WORKERS";

/// Command-line flags that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub workers: Option<usize>,
    pub depth: Option<u32>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub max_iterations: Option<u32>,
}

/// Contents of `run_meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    /// sha256 of the config file bytes.
    pub config_hash: String,
    /// The config after overrides.
    pub config: RunConfig,
    pub template_version: String,
    pub template_hash: String,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
    pub workers: usize,
    pub samples: usize,
    /// Replaying this file with `workers = 1` reproduces the run.
    pub replay_fixture: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub records: usize,
    /// Samples whose session hit the end of a replay fixture.
    pub fixture_exhausted: usize,
    pub table: String,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn resolve_workers(config_workers: usize, flag: Option<usize>) -> Result<usize, CliError> {
    let env =
        match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        };
    let workers = flag.or(env).unwrap_or(config_workers);
    if workers == 0 {
        return Err(CliError::Config("worker count must be at least 1".into()));
    }
    Ok(workers)
}

fn build_backend(spec: &BackendSpec) -> Result<Box<dyn Backend>, CliError> {
    Ok(match spec {
        BackendSpec::Http(config) => {
            check_http_config(config)?;
            Box::new(HttpBackend::new(config.clone()).map_err(|e| CliError::Config(e.to_string()))?)
        }
        BackendSpec::Replay { fixture, model_id } => {
            let entries = load_replay_fixture(fixture).map_err(|e| CliError::Fixture(e.to_string()))?;
            Box::new(ReplayBackend::new(model_id.clone(), entries))
        }
        BackendSpec::Rule {
            model_id,
            strategy,
            latency_ms,
        } => Box::new(RuleAgent::new(model_id.clone(), strategy.clone()).with_latency_ms(*latency_ms)),
    })
}

fn check_http_config(config: &BackendConfig) -> Result<(), CliError> {
    match std::env::var(&config.api_key_env) {
        Ok(v) if !v.is_empty() => Ok(()),
        _ => Err(CliError::Config(format!(
            "environment variable {} is not set",
            config.api_key_env
        ))),
    }
}

fn load_samples(spec: &BenchmarkSpec, seed: u64) -> Result<Vec<BenchSample>, CliError> {
    match spec {
        BenchmarkSpec::Sniah {
            count,
            haystack_tokens,
            ..
        } => {
            if *count == 0 || *haystack_tokens < 64 {
                return Err(CliError::Config(
                    "sniah needs count >= 1 and haystack_tokens >= 64".into(),
                ));
            }
            Ok(generate_sniah(*count, *haystack_tokens, seed))
        }
        BenchmarkSpec::Jsonl { format, path, .. } => {
            load_jsonl(path, *format, &spec.load_options()).map_err(|e| match e {
                LoadError::Io { .. } => CliError::Io(e.to_string()),
                LoadError::MalformedLine { .. } => CliError::Fixture(e.to_string()),
            })
        }
    }
}

/// File-system safe version of a sample id.
fn trace_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.jsonl")
}

/// Loads the config, runs every sample, and writes `records.jsonl`,
/// `traces/<id>.jsonl`, `replay_fixture.jsonl` and `run_meta.json`.
pub fn cmd_run(config_path: &Path, overrides: &RunOverrides) -> Result<RunSummary, CliError> {
    let started_at_ms = now_ms();
    let (mut config, raw) = RunConfig::load(config_path)?;
    if let Some(d) = overrides.depth {
        config.session.depth = d;
    }
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if let Some(o) = &overrides.output_dir {
        config.output_dir = o.clone();
    }
    if let Some(m) = overrides.max_iterations {
        config.session.max_iterations = m;
    }
    let mut workers = resolve_workers(config.workers, overrides.workers)?;
    if matches!(config.backend, BackendSpec::Replay { .. }) && workers > 1 {
        tracing::info!(workers, "replay fixtures are served in order; using one worker");
        workers = 1;
    }
    config.workers = workers;

    let session = config.session.to_session_config()?;
    let costs = CostModel::load(&config.cost_model).map_err(|e| CliError::Config(e.to_string()))?;
    let model_id = config.backend.model_id().to_string();
    costs
        .price(&model_id)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let backend = build_backend(&config.backend)?;
    let samples = load_samples(&config.benchmark, config.seed)?;
    if samples.is_empty() {
        tracing::warn!("benchmark produced no samples");
    }

    let out = config.output_dir.clone();
    let traces = out.join("traces");
    fs::create_dir_all(&traces).map_err(|e| io_err(&traces, e))?;

    let condition = Condition {
        model_id: model_id.clone(),
        depth: session.depth,
        benchmark: config.benchmark.name(),
    };
    let run = Runner {
        samples: &samples,
        session: &session,
        backend: backend.as_ref(),
        costs: &costs,
        condition: &condition,
        traces: &traces,
    };
    let outputs = run.all(workers)?;

    let records: Vec<SampleRecord> = outputs.iter().map(|o| o.record.clone()).collect();
    let records_path = out.join("records.jsonl");
    write_records_jsonl(&records_path, &records).map_err(|e| CliError::Io(e.to_string()))?;

    let fixture_path = out.join("replay_fixture.jsonl");
    write_fixture(&fixture_path, outputs.iter().flat_map(|o| o.replay.iter()))?;

    let table = if records.is_empty() {
        String::new()
    } else {
        render_rows_table(&aggregate(&records, GroupBy::Condition).expect("records are non-empty"))
    };
    let fixture_exhausted = outputs.iter().filter(|o| o.fixture_exhausted).count();

    let meta = RunMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hex::encode(Sha256::digest(&raw)),
        config,
        template_version: SYSTEM_TEMPLATE_VERSION.to_string(),
        template_hash: template_hash(&session.system_template),
        started_at_ms,
        finished_at_ms: now_ms(),
        workers,
        samples: samples.len(),
        replay_fixture: "replay_fixture.jsonl".to_string(),
    };
    let meta_path = out.join("run_meta.json");
    let json = serde_json::to_string_pretty(&meta).expect("run metadata serializes");
    fs::write(&meta_path, json + "\n").map_err(|e| io_err(&meta_path, e))?;

    Ok(RunSummary {
        output_dir: out,
        records: records.len(),
        fixture_exhausted,
        table,
    })
}

fn write_fixture<'a>(path: &Path, entries: impl Iterator<Item = &'a ReplayEntry>) -> Result<(), CliError> {
    let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(|e| io_err(path, e))?);
    for entry in entries {
        let line = serde_json::to_string(entry).expect("fixture entries serialize");
        writeln!(file, "{line}").map_err(|e| io_err(path, e))?;
    }
    file.flush().map_err(|e| io_err(path, e))
}

struct SampleOutput {
    record: SampleRecord,
    replay: Vec<ReplayEntry>,
    fixture_exhausted: bool,
}

struct Runner<'a> {
    samples: &'a [BenchSample],
    session: &'a SessionConfig,
    backend: &'a dyn Backend,
    costs: &'a CostModel,
    condition: &'a Condition,
    traces: &'a Path,
}

impl Runner<'_> {
    fn all(&self, workers: usize) -> Result<Vec<SampleOutput>, CliError> {
        let next = AtomicUsize::new(0);
        let sink = RecordSink::new();
        let replay = std::sync::Mutex::new(Vec::new());
        let failure = std::sync::Mutex::new(None::<CliError>);
        std::thread::scope(|scope| {
            for _ in 0..workers.min(self.samples.len().max(1)) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= self.samples.len() || failure.lock().unwrap().is_some() {
                        break;
                    }
                    match self.one(&self.samples[i]) {
                        Ok(out) => {
                            sink.push(i, out.record);
                            replay
                                .lock()
                                .unwrap()
                                .push((i, out.replay, out.fixture_exhausted));
                        }
                        Err(e) => {
                            failure.lock().unwrap().get_or_insert(e);
                        }
                    }
                });
            }
        });
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        let mut replay = replay.into_inner().unwrap();
        replay.sort_by_key(|(i, ..)| *i);
        Ok(sink
            .into_sorted()
            .into_iter()
            .zip(replay)
            .map(|(record, (_, replay, fixture_exhausted))| SampleOutput {
                record,
                replay,
                fixture_exhausted,
            })
            .collect())
    }

    fn one(&self, sample: &BenchSample) -> Result<SampleOutput, CliError> {
        tracing::info!(id = %sample.id, "running sample");
        let result = run_session(&sample.question, &sample.context, self.session, self.backend)
            .map_err(|e| CliError::Config(format!("sample {}: {e}", sample.id)))?;
        let trace_path = self.traces.join(trace_file_name(&sample.id));
        write_trace_jsonl(&trace_path, &result.trace).map_err(|e| io_err(&trace_path, e))?;

        let mut replay = Vec::new();
        let mut fixture_exhausted = false;
        for event in &result.trace {
            if let TracePayload::BackendCall {
                response,
                usage,
                latency_ms,
                estimated,
                error,
                ..
            } = &event.payload
            {
                if let (Some(text), Some(usage)) = (response, usage) {
                    replay.push(ReplayEntry {
                        text: text.clone(),
                        input_tokens: usage.input_tokens,
                        output_tokens: usage.output_tokens,
                        latency_ms: *latency_ms,
                        estimated: *estimated,
                    });
                }
                if error
                    .as_deref()
                    .is_some_and(|e| e.starts_with("fixture_exhausted"))
                {
                    fixture_exhausted = true;
                }
            }
        }

        let score = score_answer(&sample.gold, result.answer.as_deref());
        let record = SampleRecord {
            sample_id: sample.id.clone(),
            condition: self.condition.clone(),
            score,
            wall_time_ms: result.wall_time_ms,
            usage: result.totals,
            usage_estimated: result.usage_estimated,
            cost_cents: compute_cost(result.totals, &self.condition.model_id, self.costs)
                .map_err(|e| CliError::Config(e.to_string()))?,
            termination: result.termination,
            failure_tags: tag_failures(&result, &sample.gold, &sample.context),
            iterations: result.iterations,
            subcalls: result.subcalls,
            answer: result.answer.clone(),
        };
        Ok(SampleOutput {
            record,
            replay,
            fixture_exhausted,
        })
    }
}
