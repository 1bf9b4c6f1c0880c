//! A model that never answers is stopped by the iteration cap, and a token
//! ceiling stops a session before it spends more.

use rlm_forge::backend::{RuleAgent, Strategy};
use rlm_forge::bench::Gold;
use rlm_forge::metrics::tag_failures;
use rlm_forge::orchestrator::{run_session, SessionConfig};

fn main() {
    let agent = RuleAgent::new("mock", Strategy::InfiniteLoop);
    let context = "A long document with no answer in it.";
    let gold = Gold::ExactText {
        answers: vec!["42".into()],
    };

    let capped = SessionConfig {
        max_iterations: 5,
        ..SessionConfig::with_depth(1)
    };
    let r = run_session("What is the answer?", context, &capped, &agent).unwrap();
    println!(
        "iteration cap: termination={} backend_calls={} answer={:?} tags={:?}",
        r.termination,
        r.count_kind("backend_call"),
        r.answer,
        tag_failures(&r, &gold, context)
    );

    let ceiling = SessionConfig {
        token_ceiling: Some(3_000),
        ..SessionConfig::with_depth(1)
    };
    let r = run_session("What is the answer?", context, &ceiling, &agent).unwrap();
    println!(
        "token ceiling: termination={} backend_calls={} tokens={}",
        r.termination,
        r.count_kind("backend_call"),
        r.totals.total()
    );
}
