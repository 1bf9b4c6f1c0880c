//! Runs one short session against an OpenAI-compatible chat endpoint.
//!
//! The key is read from the environment variable named by `api_key_env`
//! (or from a `.env` file). Usage:
//!
//!     DEEPSEEK_API_KEY=... cargo run --example openai_backend -- [depth]
//!
//! `RLM_BASE_URL`, `RLM_MODEL` and `RLM_KEY_ENV` override the DeepSeek defaults.

use rlm_forge::backend::{BackendConfig, HttpBackend};
use rlm_forge::bench::{generate_sniah, score_answer};
use rlm_forge::metrics::{compute_cost, CostModel};
use rlm_forge::orchestrator::{run_session, trace::render_trace, SessionConfig};

fn main() {
    let _ = dotenvy::dotenv();
    let depth: u32 = std::env::args().nth(1).and_then(|d| d.parse().ok()).unwrap_or(1);

    let mut config = BackendConfig::deepseek();
    if let Ok(url) = std::env::var("RLM_BASE_URL") {
        config.base_url = url;
    }
    if let Ok(model) = std::env::var("RLM_MODEL") {
        config.model_id = model;
    }
    if let Ok(key_env) = std::env::var("RLM_KEY_ENV") {
        config.api_key_env = key_env;
    }
    if std::env::var(&config.api_key_env).is_err() {
        eprintln!(
            "set {} (or put it in .env) to run this example",
            config.api_key_env
        );
        std::process::exit(2);
    }
    config.max_tokens = Some(1024);
    let model_id = config.model_id.clone();
    let backend = HttpBackend::new(config).expect("http client");

    let sample = generate_sniah(1, 4_000, 1).remove(0);
    let result = match run_session(
        &sample.question,
        &sample.context,
        &SessionConfig::with_depth(depth),
        &backend,
    ) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("session failed: {e}");
            std::process::exit(1);
        }
    };
    print!("{}", render_trace(&result.trace));
    println!("answer: {:?}", result.answer);
    println!("score: {}", score_answer(&sample.gold, result.answer.as_deref()));
    println!("tokens: {} in {} ms", result.totals.total(), result.wall_time_ms);
    let costs_path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/costs.toml");
    if let Ok(cents) = CostModel::load(&costs_path)
        .map_err(|e| e.to_string())
        .and_then(|c| compute_cost(result.totals, &model_id, &c).map_err(|e| e.to_string()))
    {
        println!("cost: {cents:.4} cents");
    }
}
