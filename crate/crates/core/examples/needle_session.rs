//! One needle-in-a-haystack sample through a depth-1 session with the
//! scripted grep agent, printing the trace and the score.

use rlm_forge::backend::{RuleAgent, Strategy};
use rlm_forge::bench::{generate_sniah, score_answer};
use rlm_forge::orchestrator::{run_session, trace::render_trace, SessionConfig};

fn main() {
    let sample = generate_sniah(1, 8_000, 42).remove(0);
    println!("question: {}", sample.question);
    println!("context: {} chars\n", sample.context.len());

    let agent = RuleAgent::new("mock", Strategy::GrepNeedle { pattern: None });
    let result = run_session(
        &sample.question,
        &sample.context,
        &SessionConfig::with_depth(1),
        &agent,
    )
    .expect("valid session");

    print!("{}", render_trace(&result.trace));
    println!(
        "\nanswer: {:?}\ntermination: {}\niterations: {}\ntokens: {} (estimated: {})\nscore: {}",
        result.answer,
        result.termination,
        result.iterations,
        result.totals.total(),
        result.usage_estimated,
        score_answer(&sample.gold, result.answer.as_deref()),
    );
}
