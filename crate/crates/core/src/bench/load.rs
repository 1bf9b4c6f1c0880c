use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use super::{estimate_length, BenchSample, Gold, SampleMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JsonlFormat {
    /// `{ "index", "input", "outputs", "length" }`
    RulerNiah,
    /// `{ "id", "context", "question", "answer", "answer_type", "context_len", "dataset" }`
    OolongExport,
    /// Serialized [`BenchSample`]s, as written by `write_samples_jsonl`.
    Native,
}

/// Inclusive token-length bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthFilter {
    pub min: u64,
    pub max: u64,
}

impl Default for LengthFilter {
    fn default() -> Self {
        Self {
            min: 0,
            max: u64::MAX,
        }
    }
}

impl LengthFilter {
    pub fn new(min: u64, max: u64) -> Self {
        Self { min, max }
    }

    pub fn accepts(&self, tokens: u64) -> bool {
        (self.min..=self.max).contains(&tokens)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub filter: LengthFilter,
    /// Applied after filtering.
    pub take_first: Option<usize>,
    /// Keep only records whose `dataset` field matches.
    pub dataset: Option<String>,
    /// Abort on the first malformed line instead of skipping it.
    pub strict: bool,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Deserialize)]
struct RulerRecord {
    index: i64,
    input: String,
    outputs: Vec<String>,
    #[serde(default)]
    length: Option<u64>,
}

#[derive(Deserialize)]
struct OolongRecord {
    id: Json,
    context: String,
    question: String,
    answer: Json,
    answer_type: String,
    #[serde(default)]
    context_len: Option<u64>,
    #[serde(default)]
    dataset: Option<String>,
}

/// The last line of the input that contains a question mark.
fn ruler_question(input: &str) -> String {
    input
        .lines()
        .rev()
        .find(|l| l.contains('?'))
        .unwrap_or("")
        .trim()
        .to_string()
}

fn parse_ruler(line: &str) -> Result<(BenchSample, Option<String>), String> {
    let r: RulerRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if r.outputs.is_empty() {
        return Err("`outputs` is empty".into());
    }
    if r.input.is_empty() {
        return Err("`input` is empty".into());
    }
    let tokens = r
        .length
        .filter(|&n| n > 0)
        .unwrap_or_else(|| estimate_length(&r.input));
    Ok((
        BenchSample {
            id: format!("ruler-{}", r.index),
            question: ruler_question(&r.input),
            gold: Gold::ExactText { answers: r.outputs },
            meta: SampleMeta {
                source: "ruler_niah".into(),
                token_length_estimate: tokens,
            },
            context: r.input,
        },
        None,
    ))
}

fn parse_oolong(line: &str) -> Result<(BenchSample, Option<String>), String> {
    let r: OolongRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if r.context.is_empty() {
        return Err("`context` is empty".into());
    }
    let id = match r.id {
        Json::String(s) => s,
        other => other.to_string(),
    };
    let gold = match r.answer_type.as_str() {
        "label" => Gold::ExactLabel {
            label: match r.answer {
                Json::String(s) => s,
                other => other.to_string(),
            },
        },
        "number" => {
            let value = match &r.answer {
                Json::Number(n) => n.as_f64(),
                Json::String(s) => s.trim().parse().ok(),
                _ => None,
            }
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| format!("numeric answer {} is not a finite number", r.answer))?;
            Gold::Numeric { value }
        }
        other => return Err(format!("unknown answer_type {other:?}")),
    };
    let tokens = r
        .context_len
        .filter(|&n| n > 0)
        .unwrap_or_else(|| estimate_length(&r.context));
    Ok((
        BenchSample {
            id,
            question: r.question,
            gold,
            meta: SampleMeta {
                source: "oolong_export".into(),
                token_length_estimate: tokens,
            },
            context: r.context,
        },
        r.dataset,
    ))
}

fn parse_native(line: &str) -> Result<(BenchSample, Option<String>), String> {
    let s: BenchSample = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if s.context.is_empty() {
        return Err("`context` is empty".into());
    }
    Ok((s, None))
}

/// Loads samples in file order, filtered by length (and dataset), then
/// truncated to `take_first`.
pub fn load_jsonl(
    path: &Path,
    format: JsonlFormat,
    options: &LoadOptions,
) -> Result<Vec<BenchSample>, LoadError> {
    let io_err = |source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let parse = match format {
        JsonlFormat::RulerNiah => parse_ruler,
        JsonlFormat::OolongExport => parse_oolong,
        JsonlFormat::Native => parse_native,
    };
    let limit = options.take_first.unwrap_or(usize::MAX);
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        if samples.len() >= limit {
            break;
        }
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let (sample, dataset) = match parse(&line) {
            Ok(parsed) => parsed,
            Err(message) if options.strict => {
                return Err(LoadError::MalformedLine {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                })
            }
            Err(message) => {
                tracing::warn!(path = %path.display(), line = i + 1, %message, "skipping malformed record");
                continue;
            }
        };
        if let Some(want) = &options.dataset {
            if dataset.as_deref() != Some(want.as_str()) {
                continue;
            }
        }
        if options.filter.accepts(sample.meta.token_length_estimate) {
            samples.push(sample);
        }
    }
    Ok(samples)
}

/// Reads native sample files strictly.
pub fn read_samples_jsonl(path: &Path) -> Result<Vec<BenchSample>, LoadError> {
    load_jsonl(
        path,
        JsonlFormat::Native,
        &LoadOptions {
            strict: true,
            ..LoadOptions::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn ruler_line(index: usize, length: u64) -> String {
        serde_json::json!({
            "index": index,
            "input": format!("Some text.\nWhat is the special magic number for x{index} mentioned in the provided text?\nAnswer:"),
            "outputs": [format!("{}", 1000000 + index)],
            "length": length,
        })
        .to_string()
    }

    #[test]
    fn length_filter_drops_short_records() {
        let f = file(&[ruler_line(0, 100), ruler_line(1, 2048), ruler_line(2, 70_000)]);
        let opts = LoadOptions {
            filter: LengthFilter::new(1024, 65_536),
            ..LoadOptions::default()
        };
        let got = load_jsonl(f.path(), JsonlFormat::RulerNiah, &opts).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].id, "ruler-1");
        assert_eq!(
            got[0].question,
            "What is the special magic number for x1 mentioned in the provided text?"
        );
    }

    #[test]
    fn take_first_applies_after_filtering_in_order() {
        let lines: Vec<String> = (0..60)
            .map(|i| ruler_line(i, if i % 6 == 0 { 10 } else { 4096 }))
            .collect();
        let opts = LoadOptions {
            filter: LengthFilter::new(1024, 65_536),
            take_first: Some(20),
            ..LoadOptions::default()
        };
        let got = load_jsonl(file(&lines).path(), JsonlFormat::RulerNiah, &opts).unwrap();
        let expected: Vec<String> = (0..60)
            .filter(|i| i % 6 != 0)
            .take(20)
            .map(|i| format!("ruler-{i}"))
            .collect();
        assert_eq!(got.iter().map(|s| s.id.clone()).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn malformed_lines_skip_or_abort() {
        let f = file(&[ruler_line(0, 5), "{not json".into(), ruler_line(2, 5)]);
        let lenient = load_jsonl(f.path(), JsonlFormat::RulerNiah, &LoadOptions::default()).unwrap();
        assert_eq!(lenient.len(), 2);
        let strict = LoadOptions {
            strict: true,
            ..LoadOptions::default()
        };
        match load_jsonl(f.path(), JsonlFormat::RulerNiah, &strict) {
            Err(LoadError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oolong_records_map_to_golds() {
        let lines = [
            serde_json::json!({"id": "a", "context": "c1", "question": "q", "answer": "entity",
                "answer_type": "label", "context_len": 2000, "dataset": "trec_coarse"}),
            serde_json::json!({"id": 7, "context": "c2", "question": "q", "answer": 12,
                "answer_type": "number", "context_len": 2000, "dataset": "trec_coarse"}),
            serde_json::json!({"id": "c", "context": "c3", "question": "q", "answer": "3",
                "answer_type": "number", "context_len": 2000, "dataset": "other"}),
        ]
        .map(|v| v.to_string());
        let opts = LoadOptions {
            dataset: Some("trec_coarse".into()),
            strict: true,
            ..LoadOptions::default()
        };
        let got = load_jsonl(file(&lines).path(), JsonlFormat::OolongExport, &opts).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(
            got[0].gold,
            Gold::ExactLabel {
                label: "entity".into()
            }
        );
        assert_eq!(got[1].id, "7");
        assert_eq!(got[1].gold, Gold::Numeric { value: 12.0 });
    }

    #[test]
    fn missing_length_falls_back_to_estimate() {
        let line = serde_json::json!({"index": 0, "input": "abcdefghi?", "outputs": ["x"]}).to_string();
        let got = load_jsonl(
            file(&[line]).path(),
            JsonlFormat::RulerNiah,
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(got[0].meta.token_length_estimate, 3);
    }

    #[test]
    fn native_round_trip() {
        let samples = crate::bench::generate_sniah(3, 64, 1);
        let f = tempfile::NamedTempFile::new().unwrap();
        crate::bench::write_samples_jsonl(f.path(), &samples).unwrap();
        assert_eq!(read_samples_jsonl(f.path()).unwrap(), samples);
    }
}
