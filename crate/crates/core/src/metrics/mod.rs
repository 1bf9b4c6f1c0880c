//! Per-sample records, cost accounting, failure tagging and aggregation.

mod cost;
mod report;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::TokenUsage;
use crate::bench::{extract_answer, normalize, score_answer, Gold};
use crate::orchestrator::{SessionResult, Termination};

pub use cost::{compute_cost, CostError, CostModel, ModelPrice};
pub use report::{
    render_rows_table, render_svg_chart, write_report_csv, write_report_json, Metric, Report,
    REPORT_SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub model_id: String,
    pub depth: u32,
    pub benchmark: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    FormatCollapse,
    MissingFinal,
    AnswerFormatMiss,
    UngroundedAnswer,
    IterationCapHit,
}

impl Tag {
    pub const ALL: [Tag; 5] = [
        Tag::FormatCollapse,
        Tag::MissingFinal,
        Tag::AnswerFormatMiss,
        Tag::UngroundedAnswer,
        Tag::IterationCapHit,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::FormatCollapse => "format_collapse",
            Tag::MissingFinal => "missing_final",
            Tag::AnswerFormatMiss => "answer_format_miss",
            Tag::UngroundedAnswer => "ungrounded_answer",
            Tag::IterationCapHit => "iteration_cap_hit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub condition: Condition,
    pub score: f64,
    pub wall_time_ms: u64,
    pub usage: TokenUsage,
    #[serde(default)]
    pub usage_estimated: bool,
    pub cost_cents: f64,
    pub termination: Termination,
    pub failure_tags: Vec<Tag>,
    #[serde(default)]
    pub iterations: u32,
    #[serde(default)]
    pub subcalls: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

/// Heuristic failure tags for one finished session.
pub fn tag_failures(result: &SessionResult, gold: &Gold, context: &str) -> Vec<Tag> {
    tag_outcome(result.answer.as_deref(), result.termination, gold, context)
}

/// [`tag_failures`] on the bare outcome.
pub fn tag_outcome(answer: Option<&str>, termination: Termination, gold: &Gold, context: &str) -> Vec<Tag> {
    let mut tags = Vec::new();
    if let Some(a) = answer {
        if a.contains("```") || a.contains("print(") {
            tags.push(Tag::FormatCollapse);
        }
    }
    if termination != Termination::Final {
        tags.push(Tag::MissingFinal);
    }
    if let Some(a) = answer {
        if gold.expects_answer_prefix() && !a.contains("Answer:") {
            tags.push(Tag::AnswerFormatMiss);
        }
        let extracted = normalize(extract_answer(a));
        if score_answer(gold, Some(a)) == 0.0
            && !extracted.is_empty()
            && !normalize(context).contains(&extracted)
        {
            tags.push(Tag::UngroundedAnswer);
        }
    }
    if termination == Termination::IterationsExhausted {
        tags.push(Tag::IterationCapHit);
    }
    tags
}

/// How records are grouped into report rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    /// Model, depth and benchmark.
    #[default]
    Condition,
    Model,
    Depth,
    Benchmark,
    /// One row over everything.
    All,
}

impl std::str::FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "condition" => Ok(GroupBy::Condition),
            "model" => Ok(GroupBy::Model),
            "depth" => Ok(GroupBy::Depth),
            "benchmark" => Ok(GroupBy::Benchmark),
            "all" => Ok(GroupBy::All),
            other => Err(format!(
                "unknown grouping {other:?} (expected condition, model, depth, benchmark or all)"
            )),
        }
    }
}

/// Group identity; fields not part of the grouping are `None`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub model_id: Option<String>,
    pub depth: Option<u32>,
    pub benchmark: Option<String>,
}

impl GroupKey {
    fn of(record: &SampleRecord, by: GroupBy) -> Self {
        let c = &record.condition;
        let mut key = GroupKey::default();
        if matches!(by, GroupBy::Condition | GroupBy::Model) {
            key.model_id = Some(c.model_id.clone());
        }
        if matches!(by, GroupBy::Condition | GroupBy::Depth) {
            key.depth = Some(c.depth);
        }
        if matches!(by, GroupBy::Condition | GroupBy::Benchmark) {
            key.benchmark = Some(c.benchmark.clone());
        }
        key
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(b) = &self.benchmark {
            parts.push(b.clone());
        }
        if let Some(m) = &self.model_id {
            parts.push(m.clone());
        }
        if let Some(d) = self.depth {
            parts.push(format!("depth={d}"));
        }
        if parts.is_empty() {
            "all".to_string()
        } else {
            parts.join(" / ")
        }
    }
}

/// One report row. Means are plain arithmetic means over the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub key: GroupKey,
    pub n: usize,
    /// Mean score x 100.
    pub accuracy_pct: f64,
    /// Share of samples with score 1, x 100.
    pub strict_accuracy_pct: f64,
    pub mean_seconds: f64,
    pub max_seconds: f64,
    /// Mean total tokens / 1000.
    pub mean_k_tokens: f64,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    pub mean_cents: f64,
    pub mean_iterations: f64,
    pub mean_subcalls: f64,
    /// Mean of per-sample milliseconds per token; samples without tokens are skipped.
    pub mean_ms_per_token: f64,
    pub tags: BTreeMap<Tag, usize>,
}

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("no records to aggregate")]
    EmptyGroup,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn summarize(key: GroupKey, records: &[&SampleRecord]) -> AggregateRow {
    let each = |f: &dyn Fn(&SampleRecord) -> f64| mean(records.iter().map(|r| f(r)));
    let mut tags = BTreeMap::new();
    for r in records {
        for t in &r.failure_tags {
            *tags.entry(*t).or_insert(0) += 1;
        }
    }
    AggregateRow {
        key,
        n: records.len(),
        accuracy_pct: each(&|r| r.score) * 100.0,
        strict_accuracy_pct: each(&|r| if r.score == 1.0 { 1.0 } else { 0.0 }) * 100.0,
        mean_seconds: each(&|r| r.wall_time_ms as f64) / 1000.0,
        max_seconds: records.iter().map(|r| r.wall_time_ms).max().unwrap_or(0) as f64 / 1000.0,
        mean_k_tokens: each(&|r| r.usage.total() as f64) / 1000.0,
        mean_input_tokens: each(&|r| r.usage.input_tokens as f64),
        mean_output_tokens: each(&|r| r.usage.output_tokens as f64),
        mean_cents: each(&|r| r.cost_cents),
        mean_iterations: each(&|r| r.iterations as f64),
        mean_subcalls: each(&|r| r.subcalls as f64),
        mean_ms_per_token: mean(
            records
                .iter()
                .filter(|r| r.usage.total() > 0)
                .map(|r| r.wall_time_ms as f64 / r.usage.total() as f64),
        ),
        tags,
    }
}

/// One row per group, ordered by group key.
pub fn aggregate(records: &[SampleRecord], by: GroupBy) -> Result<Vec<AggregateRow>, AggregateError> {
    if records.is_empty() {
        return Err(AggregateError::EmptyGroup);
    }
    let mut groups: BTreeMap<GroupKey, Vec<&SampleRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(GroupKey::of(r, by)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|(key, members)| summarize(key, &members))
        .collect())
}

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path} has {available} records, {requested} requested")]
    InsufficientRecords {
        path: PathBuf,
        available: usize,
        requested: usize,
    },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

pub fn write_records_jsonl(path: &Path, records: &[SampleRecord]) -> Result<(), RecordsError> {
    let io_err = |source| RecordsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<SampleRecord>, RecordsError> {
    let io_err = |source| RecordsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| RecordsError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

/// Output of [`recompute_first_n`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trimmed {
    pub rows: Vec<AggregateRow>,
    pub records_path: PathBuf,
    pub report_path: PathBuf,
}

/// Aggregates the first `n` records of a file in their original order and
/// writes `<stem>.first<n>.jsonl` and `<stem>.first<n>.report.json` next to
/// it. The input file is not modified.
pub fn recompute_first_n(path: &Path, n: usize, by: GroupBy) -> Result<Trimmed, RecordsError> {
    let records = read_records_jsonl(path)?;
    if n == 0 || records.len() < n {
        return Err(RecordsError::InsufficientRecords {
            path: path.to_path_buf(),
            available: records.len(),
            requested: n,
        });
    }
    let kept = &records[..n];
    let rows = aggregate(kept, by)?;
    let stem = path
        .file_stem()
        .map_or("records".into(), |s| s.to_string_lossy().into_owned());
    let dir = path.parent().unwrap_or(Path::new("."));
    let records_path = dir.join(format!("{stem}.first{n}.jsonl"));
    let report_path = dir.join(format!("{stem}.first{n}.report.json"));
    write_records_jsonl(&records_path, kept)?;
    write_report_json(&report_path, &Report::new(by, rows.clone())).map_err(|source| RecordsError::Io {
        path: report_path.clone(),
        source,
    })?;
    Ok(Trimmed {
        rows,
        records_path,
        report_path,
    })
}

/// Collects records from concurrent workers; yields them in sample order.
#[derive(Debug, Default)]
pub struct RecordSink {
    inner: Mutex<Vec<(usize, SampleRecord)>>,
}

impl RecordSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, index: usize, record: SampleRecord) {
        self.inner
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push((index, record));
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_sorted(self) -> Vec<SampleRecord> {
        let mut items = self.inner.into_inner().unwrap_or_else(|e| e.into_inner());
        items.sort_by_key(|(i, _)| *i);
        items.into_iter().map(|(_, r)| r).collect()
    }
}
