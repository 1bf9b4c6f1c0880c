use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{
    generate_sniah, load_jsonl, score_answer, write_samples_jsonl, JsonlFormat, LoadError, LoadOptions,
};
use crate::metrics::{
    aggregate, read_records_jsonl, recompute_first_n, render_svg_chart, tag_outcome, write_report_csv,
    write_report_json, AggregateRow, GroupBy, Metric, RecordsError, Report, Tag, Trimmed,
};
use crate::orchestrator::trace::{read_trace_jsonl, render_trace, TraceReadError};
use crate::orchestrator::Termination;

use super::CliError;

fn records_err(e: RecordsError) -> CliError {
    match e {
        RecordsError::Io { .. } => CliError::Io(e.to_string()),
        RecordsError::Malformed { .. } | RecordsError::InsufficientRecords { .. } => {
            CliError::Fixture(e.to_string())
        }
        RecordsError::Aggregate(_) => CliError::Fixture(e.to_string()),
    }
}

/// Aggregates every records file matching `pattern` and writes
/// `report.csv`, `report.json` and one SVG chart per metric into `out`.
pub fn cmd_report(pattern: &str, by: GroupBy, out: &Path) -> Result<Vec<AggregateRow>, CliError> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| CliError::Config(format!("bad glob {pattern:?}: {e}")))?
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Io(e.to_string()))?;
    if paths.is_empty() {
        return Err(CliError::Io(format!("no records files match {pattern:?}")));
    }
    let mut records = Vec::new();
    for p in &paths {
        records.extend(read_records_jsonl(p).map_err(records_err)?);
    }
    let rows = aggregate(&records, by).map_err(|e| CliError::Fixture(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    let csv = out.join("report.csv");
    write_report_csv(&csv, &rows).map_err(|e| io(&csv, e))?;
    let json = out.join("report.json");
    write_report_json(&json, &Report::new(by, rows.clone())).map_err(|e| io(&json, e))?;
    for metric in Metric::ALL {
        let svg = out.join(format!("{}.svg", metric.slug()));
        fs::write(&svg, render_svg_chart(&rows, metric)).map_err(|e| io(&svg, e))?;
    }
    Ok(rows)
}

pub fn cmd_trim(records: &Path, n: usize, by: GroupBy) -> Result<Trimmed, CliError> {
    recompute_first_n(records, n, by).map_err(records_err)
}

pub fn cmd_generate(count: usize, haystack_tokens: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    if count == 0 || haystack_tokens < 64 {
        return Err(CliError::Config(
            "count must be >= 1 and haystack_tokens >= 64".into(),
        ));
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    write_samples_jsonl(out, &generate_sniah(count, haystack_tokens, seed))
        .map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

#[derive(Debug, Deserialize)]
struct AnswerLine {
    id: serde_json::Value,
    #[serde(default)]
    answer: Option<String>,
}

/// One scored answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub id: String,
    pub score: f64,
    pub failure_tags: Vec<Tag>,
}

/// Scores `{"id", "answer"}` lines against the samples of a dataset file.
pub fn cmd_score(answers: &Path, dataset: &Path, format: JsonlFormat) -> Result<Vec<ScoreLine>, CliError> {
    let options = LoadOptions {
        strict: true,
        ..LoadOptions::default()
    };
    let samples = load_jsonl(dataset, format, &options).map_err(|e| match e {
        LoadError::Io { .. } => CliError::Io(e.to_string()),
        LoadError::MalformedLine { .. } => CliError::Fixture(e.to_string()),
    })?;
    let by_id: HashMap<&str, _> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let file = fs::File::open(answers).map_err(|e| CliError::Io(format!("{}: {e}", answers.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Io(format!("{}: {e}", answers.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: AnswerLine = serde_json::from_str(&line)
            .map_err(|e| CliError::Fixture(format!("{}:{}: {e}", answers.display(), i + 1)))?;
        let id = match parsed.id {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        let sample = by_id.get(id.as_str()).ok_or_else(|| {
            CliError::Fixture(format!(
                "{}:{}: unknown sample id {id:?}",
                answers.display(),
                i + 1
            ))
        })?;
        let answer = parsed.answer.as_deref();
        // An answer line carries no termination; a present answer counts as final.
        let termination = if answer.is_some() {
            Termination::Final
        } else {
            Termination::IterationsExhausted
        };
        let mut tags = tag_outcome(answer, termination, &sample.gold, &sample.context);
        tags.retain(|t| *t != Tag::IterationCapHit);
        out.push(ScoreLine {
            score: score_answer(&sample.gold, answer),
            failure_tags: tags,
            id,
        });
    }
    Ok(out)
}

pub fn cmd_replay(trace: &Path) -> Result<String, CliError> {
    let events = read_trace_jsonl(trace).map_err(|e| match e {
        TraceReadError::Io(io) => CliError::Io(format!("{}: {io}", trace.display())),
        TraceReadError::Malformed { .. } => CliError::Fixture(format!("{}: {e}", trace.display())),
    })?;
    Ok(render_trace(&events))
}
