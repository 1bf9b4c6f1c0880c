//! Benchmark samples: synthetic needle-in-a-haystack generation, JSONL
//! ingestion, and answer scoring.

mod load;
mod score;
mod sniah;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use load::{load_jsonl, read_samples_jsonl, JsonlFormat, LengthFilter, LoadError, LoadOptions};
pub use score::{extract_answer, normalize, parse_first_number, score_answer, score_numeric};
pub use sniah::{generate_sniah, NEEDLE_NOUNS};

/// What a correct answer looks like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Gold {
    /// Every string must occur in the normalized answer.
    ExactText {
        answers: Vec<String>,
    },
    ExactLabel {
        label: String,
    },
    Numeric {
        value: f64,
    },
}

impl Gold {
    /// Golds that expect an `Answer: ...` line.
    pub fn expects_answer_prefix(&self) -> bool {
        !matches!(self, Gold::ExactText { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub source: String,
    pub token_length_estimate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSample {
    pub id: String,
    pub context: String,
    pub question: String,
    pub gold: Gold,
    pub meta: SampleMeta,
}

/// ceil(code points / 4).
pub fn estimate_length(text: &str) -> u64 {
    crate::backend::estimate_tokens(text)
}

/// Writes samples one JSON object per line, readable by [`read_samples_jsonl`].
pub fn write_samples_jsonl(path: &Path, samples: &[BenchSample]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for sample in samples {
        serde_json::to_writer(&mut out, sample)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
