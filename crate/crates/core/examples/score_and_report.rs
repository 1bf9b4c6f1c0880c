//! Scores answers, aggregates sample records and writes the CSV/JSON report
//! and SVG charts into a temporary directory.

use rlm_forge::backend::TokenUsage;
use rlm_forge::bench::{score_answer, Gold};
use rlm_forge::metrics::{
    aggregate, compute_cost, render_rows_table, render_svg_chart, write_report_csv, Condition, CostModel,
    GroupBy, Metric, SampleRecord,
};
use rlm_forge::orchestrator::Termination;

fn main() {
    let golds = [
        (Gold::Numeric { value: 4.0 }, "The count is\nAnswer: 3"),
        (Gold::Numeric { value: 4.0 }, "Answer: 4"),
        (Gold::ExactLabel { label: "spam".into() }, "Answer: Spam"),
        (
            Gold::ExactText {
                answers: vec!["7301945".into()],
            },
            "It is 7301945.",
        ),
    ];
    for (gold, answer) in &golds {
        println!("{answer:?} -> {}", score_answer(gold, Some(answer)));
    }

    let costs = CostModel::default()
        .with_price("deepseek-chat", 28.0, 42.0)
        .with_price("kimi-k2", 60.0, 250.0);
    let mut records = Vec::new();
    for (model, depth, score, ms, tokens) in [
        ("deepseek-chat", 0, 1.0, 3_100, (8_000, 40)),
        ("deepseek-chat", 1, 1.0, 61_000, (22_000, 900)),
        ("deepseek-chat", 1, 0.0, 97_000, (31_000, 1_400)),
        ("kimi-k2", 1, 1.0, 40_000, (18_000, 600)),
        ("kimi-k2", 1, 0.25, 52_000, (21_000, 700)),
    ] {
        let usage = TokenUsage::new(tokens.0, tokens.1);
        records.push(SampleRecord {
            sample_id: format!("s{}", records.len()),
            condition: Condition {
                model_id: model.into(),
                depth,
                benchmark: "demo".into(),
            },
            score,
            wall_time_ms: ms,
            usage,
            usage_estimated: false,
            cost_cents: compute_cost(usage, model, &costs).unwrap(),
            termination: Termination::Final,
            failure_tags: Vec::new(),
            iterations: depth + 1,
            subcalls: 0,
            answer: None,
        });
    }

    let rows = aggregate(&records, GroupBy::Condition).unwrap();
    println!("\n{}", render_rows_table(&rows));

    let dir = std::env::temp_dir().join("rlm-forge-report-example");
    std::fs::create_dir_all(&dir).unwrap();
    write_report_csv(&dir.join("report.csv"), &rows).unwrap();
    for metric in Metric::ALL {
        std::fs::write(
            dir.join(format!("{}.svg", metric.slug())),
            render_svg_chart(&rows, metric),
        )
        .unwrap();
    }
    println!("report written to {}", dir.display());
}
