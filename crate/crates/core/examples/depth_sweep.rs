//! Sweeps recursion depth with an agent that delegates to `k` helpers per
//! script, showing how calls grow with depth.

use rlm_forge::backend::{RuleAgent, Strategy};
use rlm_forge::orchestrator::{run_session, SessionConfig};

fn main() {
    let context = "Part A: the launch code is 4417.\nPart B: nothing relevant.\n".repeat(20);
    println!(
        "{:>5} {:>3} {:>13} {:>12} {:>9} {:>8}",
        "depth", "k", "backend_calls", "script_execs", "subcalls", "tokens"
    );
    for k in [1u32, 2, 3] {
        let agent = RuleAgent::new("mock", Strategy::DelegateK { k });
        for depth in 0..=3u32 {
            let r = run_session(
                "What is the launch code?",
                &context,
                &SessionConfig::with_depth(depth),
                &agent,
            )
            .expect("valid session");
            assert_eq!(r.max_observed_depth, depth);
            println!(
                "{depth:>5} {k:>3} {:>13} {:>12} {:>9} {:>8}",
                r.count_kind("backend_call"),
                r.count_kind("script_exec"),
                r.subcalls,
                r.totals.total()
            );
        }
    }
}
