use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AggregateRow, GroupBy, Tag};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub group_by: GroupBy,
    pub rows: Vec<AggregateRow>,
}

impl Report {
    pub fn new(group_by: GroupBy, rows: Vec<AggregateRow>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            group_by,
            rows,
        }
    }
}

/// A plotted / tabulated quantity and its display precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    StrictAccuracy,
    Seconds,
    KTokens,
    Cents,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Accuracy,
        Metric::StrictAccuracy,
        Metric::Seconds,
        Metric::KTokens,
        Metric::Cents,
    ];

    pub fn value(&self, row: &AggregateRow) -> f64 {
        match self {
            Metric::Accuracy => row.accuracy_pct,
            Metric::StrictAccuracy => row.strict_accuracy_pct,
            Metric::Seconds => row.mean_seconds,
            Metric::KTokens => row.mean_k_tokens,
            Metric::Cents => row.mean_cents,
        }
    }

    pub fn cell(&self, row: &AggregateRow) -> String {
        match self {
            Metric::Cents => format!("{:.3}", self.value(row)),
            _ => format!("{:.1}", self.value(row)),
        }
    }

    pub fn slug(&self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::StrictAccuracy => "strict_accuracy",
            Metric::Seconds => "seconds",
            Metric::KTokens => "k_tokens",
            Metric::Cents => "cents",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            Metric::Accuracy => "Accuracy (%)",
            Metric::StrictAccuracy => "Strict accuracy (%)",
            Metric::Seconds => "Average Execution Time (seconds)",
            Metric::KTokens => "Average Token Usage (thousands)",
            Metric::Cents => "Average Token Cost (US$ cents)",
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    group: String,
    model_id: String,
    depth: String,
    benchmark: String,
    n: usize,
    accuracy_pct: String,
    strict_accuracy_pct: String,
    mean_seconds: String,
    max_seconds: String,
    mean_k_tokens: String,
    mean_cents: String,
    mean_iterations: String,
    mean_subcalls: String,
    mean_ms_per_token: String,
    format_collapse: usize,
    missing_final: usize,
    answer_format_miss: usize,
    ungrounded_answer: usize,
    iteration_cap_hit: usize,
}

fn csv_row(row: &AggregateRow) -> CsvRow {
    let tag = |t: Tag| row.tags.get(&t).copied().unwrap_or(0);
    CsvRow {
        group: row.key.label(),
        model_id: row.key.model_id.clone().unwrap_or_default(),
        depth: row.key.depth.map(|d| d.to_string()).unwrap_or_default(),
        benchmark: row.key.benchmark.clone().unwrap_or_default(),
        n: row.n,
        accuracy_pct: Metric::Accuracy.cell(row),
        strict_accuracy_pct: Metric::StrictAccuracy.cell(row),
        mean_seconds: Metric::Seconds.cell(row),
        max_seconds: format!("{:.1}", row.max_seconds),
        mean_k_tokens: Metric::KTokens.cell(row),
        mean_cents: Metric::Cents.cell(row),
        mean_iterations: format!("{:.1}", row.mean_iterations),
        mean_subcalls: format!("{:.1}", row.mean_subcalls),
        mean_ms_per_token: format!("{:.1}", row.mean_ms_per_token),
        format_collapse: tag(Tag::FormatCollapse),
        missing_final: tag(Tag::MissingFinal),
        answer_format_miss: tag(Tag::AnswerFormatMiss),
        ungrounded_answer: tag(Tag::UngroundedAnswer),
        iteration_cap_hit: tag(Tag::IterationCapHit),
    }
}

/// One CSV row per group, cells rounded for display.
pub fn write_report_csv(path: &Path, rows: &[AggregateRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(csv_row(row))?;
    }
    w.flush()
}

pub fn write_report_json(path: &Path, report: &Report) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Fixed-width text table for terminals.
pub fn render_rows_table(rows: &[AggregateRow]) -> String {
    let header = [
        "group", "n", "acc%", "strict%", "sec", "max sec", "k tok", "cents", "iters", "tags",
    ];
    let body: Vec<[String; 10]> = rows
        .iter()
        .map(|r| {
            let tags = r
                .tags
                .iter()
                .map(|(t, n)| format!("{}={n}", t.as_str()))
                .collect::<Vec<_>>()
                .join(" ");
            [
                r.key.label(),
                r.n.to_string(),
                Metric::Accuracy.cell(r),
                Metric::StrictAccuracy.cell(r),
                Metric::Seconds.cell(r),
                format!("{:.1}", r.max_seconds),
                Metric::KTokens.cell(r),
                Metric::Cents.cell(r),
                format!("{:.1}", r.mean_iterations),
                tags,
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for cells in &body {
        for (w, c) in widths.iter_mut().zip(cells) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &header);
    for cells in &body {
        line(&mut out, &cells.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

fn escape_xml(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Grouped bar chart: clusters by benchmark and model, one bar per depth.
pub fn render_svg_chart(rows: &[AggregateRow], metric: Metric) -> String {
    let mut clusters: BTreeMap<String, Vec<&AggregateRow>> = BTreeMap::new();
    let mut series: Vec<Option<u32>> = Vec::new();
    for r in rows {
        let cluster = cluster_label(r);
        clusters.entry(cluster).or_default().push(r);
        if !series.contains(&r.key.depth) {
            series.push(r.key.depth);
        }
    }
    series.sort();

    let (bar_w, gap, left, top, plot_h) = (28.0, 24.0, 60.0, 40.0, 240.0);
    let cluster_w = bar_w * series.len() as f64 + gap;
    let width = left + cluster_w * clusters.len().max(1) as f64 + 20.0;
    let height = top + plot_h + 80.0;
    let max = rows
        .iter()
        .map(|r| metric.value(r))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape_xml(metric.title())
    );
    let base = top + plot_h;
    let _ = writeln!(
        svg,
        r##"<line x1="{left}" y1="{base}" x2="{}" y2="{base}" stroke="#333"/>"##,
        width - 10.0
    );
    for (ci, (name, members)) in clusters.iter().enumerate() {
        let x0 = left + ci as f64 * cluster_w + gap / 2.0;
        for r in members {
            let si = series.iter().position(|s| *s == r.key.depth).unwrap_or(0);
            let v = metric.value(r);
            let h = v / max * plot_h;
            let x = x0 + si as f64 * bar_w;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"><title>{}</title></rect>"#,
                base - h,
                bar_w - 2.0,
                PALETTE[si % PALETTE.len()],
                escape_xml(&r.key.label())
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                x + bar_w / 2.0 - 1.0,
                base - h - 4.0,
                metric.cell(r)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + bar_w * series.len() as f64 / 2.0,
            base + 16.0,
            escape_xml(name)
        );
    }
    for (si, s) in series.iter().enumerate() {
        let y = base + 40.0 + 14.0 * si as f64;
        let label = s.map_or("all depths".to_string(), |d| format!("depth={d}"));
        let _ = writeln!(
            svg,
            r#"<rect x="{left}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{}" y="{y:.1}">{label}</text>"#,
            y - 9.0,
            PALETTE[si % PALETTE.len()],
            left + 14.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn cluster_label(row: &AggregateRow) -> String {
    let mut key = row.key.clone();
    key.depth = None;
    key.label()
}
