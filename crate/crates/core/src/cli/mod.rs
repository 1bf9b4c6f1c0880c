//! The `rlm-forge` command line: `run`, `report`, `trim`, `generate`,
//! `score` and `replay`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 fixture or
//! replay error.

mod commands;
mod config;
mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{cmd_generate, cmd_replay, cmd_report, cmd_score, cmd_trim, ScoreLine};
pub use config::{BackendSpec, BenchmarkSpec, RunConfig, SessionSpec};
pub use run::{cmd_run, RunMeta, RunOverrides, RunSummary, WORKERS_ENV};

use crate::bench::JsonlFormat;
use crate::metrics::GroupBy;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("fixture error: {0}")]
    Fixture(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Fixture(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rlm-forge",
    version,
    about = "Recursive language model runs and reports"
)]
pub struct Cli {
    /// Dot-env file to load before reading credentials.
    #[arg(long, global = true, default_value = ".env")]
    pub env_file: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a benchmark described by a TOML config.
    Run {
        config: PathBuf,
        /// Parallel samples; beats RLM_FORGE_WORKERS and the config.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        max_iterations: Option<u32>,
    },
    /// Aggregate record files into CSV, JSON and SVG reports.
    Report {
        /// Glob matching one or more records.jsonl files.
        records: String,
        /// condition, model, depth, benchmark or all.
        #[arg(long, default_value = "condition")]
        group_by: GroupBy,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Aggregate only the first N records of a file.
    Trim {
        records: PathBuf,
        /// Records to keep, counted from the start of the file.
        n: usize,
        #[arg(long, default_value = "condition")]
        group_by: GroupBy,
    },
    /// Generate synthetic needle-in-a-haystack samples.
    Generate {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 32_000)]
        haystack_tokens: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an answers file against a dataset.
    Score {
        /// JSONL lines of `{"id": ..., "answer": ...}`.
        answers: PathBuf,
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "native")]
        format: FormatArg,
        /// Write score lines here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a readable transcript of a trace file.
    Replay { trace: PathBuf },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FormatArg {
    Native,
    RulerNiah,
    OolongExport,
}

impl From<FormatArg> for JsonlFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Native => JsonlFormat::Native,
            FormatArg::RulerNiah => JsonlFormat::RulerNiah,
            FormatArg::OolongExport => JsonlFormat::OolongExport,
        }
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dotenvy::from_path(&cli.env_file) {
        Ok(()) => tracing::debug!(path = %cli.env_file.display(), "loaded env file"),
        Err(e) if e.not_found() => {}
        Err(e) => {
            eprintln!("error: cannot load {}: {e}", cli.env_file.display());
            return 2;
        }
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            workers,
            depth,
            seed,
            output_dir,
            max_iterations,
        } => {
            let overrides = RunOverrides {
                workers,
                depth,
                seed,
                output_dir,
                max_iterations,
            };
            let summary = cmd_run(&config, &overrides)?;
            print!("{}", summary.table);
            println!(
                "{} records written to {}",
                summary.records,
                summary.output_dir.display()
            );
            if summary.fixture_exhausted > 0 {
                return Err(CliError::Fixture(format!(
                    "replay fixture ran out in {} sample(s)",
                    summary.fixture_exhausted
                )));
            }
            Ok(())
        }
        Command::Report {
            records,
            group_by,
            out,
        } => {
            let rows = cmd_report(&records, group_by, &out)?;
            print!("{}", crate::metrics::render_rows_table(&rows));
            Ok(())
        }
        Command::Trim { records, n, group_by } => {
            let trimmed = cmd_trim(&records, n, group_by)?;
            print!("{}", crate::metrics::render_rows_table(&trimmed.rows));
            println!("wrote {}", trimmed.report_path.display());
            Ok(())
        }
        Command::Generate {
            count,
            haystack_tokens,
            seed,
            out,
        } => {
            cmd_generate(count, haystack_tokens, seed, &out)?;
            println!("wrote {count} samples to {}", out.display());
            Ok(())
        }
        Command::Score {
            answers,
            dataset,
            format,
            out,
        } => {
            let lines = cmd_score(&answers, &dataset, format.into())?;
            let mut text = String::new();
            for l in &lines {
                text.push_str(&serde_json::to_string(l).expect("score lines serialize"));
                text.push('\n');
            }
            match out {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
                None => print!("{text}"),
            }
            let mean = lines.iter().map(|l| l.score).sum::<f64>() / lines.len().max(1) as f64;
            eprintln!("{} answers, mean score {:.1}%", lines.len(), mean * 100.0);
            Ok(())
        }
        Command::Replay { trace } => {
            print!("{}", cmd_replay(&trace)?);
            Ok(())
        }
    }
}
