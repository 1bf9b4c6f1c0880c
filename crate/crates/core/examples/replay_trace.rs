//! Records a small offline run, replays it from its fixture and shows that
//! the records match, then renders one sample's trace.

use rlm_forge::cli::{cmd_replay, cmd_run, RunOverrides};

fn main() {
    let dir = std::env::temp_dir().join("rlm-forge-replay-example");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let costs = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/costs.toml");

    let config = |name: &str, backend: &str| {
        let path = dir.join(format!("{name}.toml"));
        let text = format!(
            "seed = 3\noutput_dir = {:?}\ncost_model = {:?}\n\n[benchmark]\nkind = \"sniah\"\ncount = 4\nhaystack_tokens = 4000\n\n[backend]\n{backend}\n\n[session]\ndepth = 1\nclock = \"simulated\"\n",
            dir.join(name).display().to_string(),
            costs.display().to_string(),
        );
        std::fs::write(&path, text).unwrap();
        path
    };

    let recorded = cmd_run(
        &config(
            "recorded",
            "kind = \"rule\"\nstrategy = \"grep-needle\"\nlatency_ms = 1200",
        ),
        &RunOverrides::default(),
    )
    .unwrap();
    println!("{}", recorded.table);

    let fixture = recorded.output_dir.join("replay_fixture.jsonl");
    let replayed = cmd_run(
        &config(
            "replayed",
            &format!(
                "kind = \"replay\"\nmodel_id = \"mock\"\nfixture = {:?}",
                fixture.display().to_string()
            ),
        ),
        &RunOverrides::default(),
    )
    .unwrap();

    let a = std::fs::read(recorded.output_dir.join("records.jsonl")).unwrap();
    let b = std::fs::read(replayed.output_dir.join("records.jsonl")).unwrap();
    println!("records identical: {}", a == b);

    let trace = std::fs::read_dir(recorded.output_dir.join("traces"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    println!("\n{}", cmd_replay(&trace).unwrap());
}
