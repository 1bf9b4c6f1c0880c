use proptest::prelude::*;
use rlm_forge::backend::{ReplayBackend, ReplayEntry, RuleAgent, Strategy, TokenUsage};
use rlm_forge::orchestrator::{run_session, ClockMode, SessionConfig, Termination, TracePayload};

fn usage_sum(trace: &[rlm_forge::orchestrator::TraceEvent]) -> TokenUsage {
    let mut total = TokenUsage::default();
    for e in trace {
        if let TracePayload::BackendCall { usage: Some(u), .. } = &e.payload {
            total += *u;
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn depth_law(depth in 0u32..=3, k in 1u32..=3, context in "[a-z ]{1,300}") {
        let agent = RuleAgent::new("mock", Strategy::DelegateK { k });
        let r = run_session("task", &context, &SessionConfig::with_depth(depth), &agent).unwrap();
        prop_assert_eq!(r.max_observed_depth, depth);
        prop_assert_eq!(r.termination, Termination::Final);
        prop_assert_eq!(r.totals, usage_sum(&r.trace));
        // Every REPL session issues k subcalls.
        let repl_sessions: u32 = (0..depth).map(|i| k.pow(i)).sum();
        prop_assert_eq!(r.subcalls, k * repl_sessions);
        prop_assert_eq!(r.count_kind("script_exec") as u32, repl_sessions);
    }

    #[test]
    fn call_count_law(max_iterations in 1u32..25) {
        let agent = RuleAgent::new("mock", Strategy::InfiniteLoop);
        let config = SessionConfig { max_iterations, ..SessionConfig::with_depth(1) };
        let r = run_session("t", "c", &config, &agent).unwrap();
        prop_assert_eq!(r.count_kind("backend_call") as u32, max_iterations);
        prop_assert_eq!(r.termination, Termination::IterationsExhausted);
        prop_assert!(r.answer.is_none());
    }

    #[test]
    fn replay_is_deterministic(usages in proptest::collection::vec((0u64..10_000, 0u64..10_000, 0u64..5_000), 4)) {
        let texts = [
            "```repl\na = llm(\"x\")\nprint(a)\n```",
            "leaf",
            "```repl\nb = peek(prompt, 3)\n```",
            "FINAL_VAR(b)",
        ];
        let entries: Vec<ReplayEntry> = texts
            .iter()
            .zip(&usages)
            .map(|(t, &(i, o, l))| ReplayEntry { latency_ms: l, ..ReplayEntry::new(*t, i, o) })
            .collect();
        let config = SessionConfig { clock: ClockMode::Simulated, ..SessionConfig::with_depth(1) };
        let a = run_session("t", "context", &config, &ReplayBackend::new("r", entries.clone())).unwrap();
        let b = run_session("t", "context", &config, &ReplayBackend::new("r", entries)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.answer.as_deref(), Some("con"));
        let expected = usages.iter().fold(TokenUsage::default(), |acc, &(i, o, _)| acc + TokenUsage::new(i, o));
        prop_assert_eq!(a.totals, expected);
        prop_assert_eq!(a.wall_time_ms, usages.iter().map(|u| u.2).sum::<u64>());
    }

    #[test]
    fn no_answer_without_final(script in proptest::collection::vec(
        prop_oneof![
            Just("```repl\nprint(1)\n```".to_string()),
            Just("thinking".to_string()),
            Just("FINAL(\"x\")".to_string()),
            Just("```repl\nx = llm(\"q\")\n```".to_string()),
        ],
        0..6,
    )) {
        let entries: Vec<ReplayEntry> = script.iter().map(|t| ReplayEntry::new(t.clone(), 1, 1)).collect();
        let config = SessionConfig { max_iterations: 4, ..SessionConfig::with_depth(1) };
        let r = run_session("t", "c", &config, &ReplayBackend::new("r", entries)).unwrap();
        prop_assert_eq!(r.answer.is_some(), r.termination == Termination::Final);
        prop_assert!(r.max_observed_depth <= 1);
        prop_assert_eq!(r.totals, usage_sum(&r.trace));
    }
}
