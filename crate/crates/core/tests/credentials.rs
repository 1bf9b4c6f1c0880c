mod common;

use std::process::Command;

use common::{all_files, canned_server, write_config};

const KEY_ENV: &str = "RLM_FORGE_TEST_SECRET";
const DUMMY_KEY: &str = "sk-dummy-7f3a9c1e5b2d4068";

fn http_body(url: &str, depth: u32, count: usize) -> String {
    format!(
        r#"
[benchmark]
kind = "sniah"
count = {count}
haystack_tokens = 200
[backend]
kind = "http"
base_url = "{url}"
model_id = "deepseek-chat"
api_key_env = "{KEY_ENV}"
timeout_secs = 10
max_concurrent = 1
[session]
depth = {depth}
max_iterations = 2
"#
    )
}

fn assert_clean(dir: &std::path::Path, extra: &[&[u8]]) {
    let files = all_files(dir);
    assert!(files.iter().any(|f| f.ends_with("records.jsonl")));
    // The .env file is the credential source itself.
    for f in files.into_iter().filter(|f| !f.ends_with(".env")) {
        let bytes = std::fs::read(&f).unwrap();
        assert!(
            !String::from_utf8_lossy(&bytes).contains(DUMMY_KEY),
            "credential leaked into {}",
            f.display()
        );
    }
    for blob in extra {
        assert!(
            !String::from_utf8_lossy(blob).contains(DUMMY_KEY),
            "credential leaked into output"
        );
    }
}

#[test]
fn key_from_environment_never_reaches_outputs() {
    let (url, server) = canned_server(3, "The special magic number is 1234567.");
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "out", &http_body(&url, 0, 3));
    let out = Command::new(env!("CARGO_BIN_EXE_rlm-forge"))
        .args(["run", cfg.to_str().unwrap()])
        .env(KEY_ENV, DUMMY_KEY)
        .env("RUST_LOG", "trace")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let requests = server.join().unwrap();
    assert_eq!(requests.len(), 3);
    // The key did go over the wire, as a bearer token.
    assert!(requests.iter().all(|r| r
        .to_ascii_lowercase()
        .contains(&format!("authorization: bearer {DUMMY_KEY}"))));
    assert_clean(dir.path(), &[&out.stdout, &out.stderr]);
}

#[test]
fn key_from_dotenv_file_never_reaches_outputs() {
    // One REPL turn without a marker, then the iteration cap.
    let (url, server) = canned_server(2, "```repl\nprint(len(prompt))\n```");
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(".env"), format!("{KEY_ENV}={DUMMY_KEY}\n")).unwrap();
    let cfg = write_config(dir.path(), "c.toml", "out", &http_body(&url, 1, 1));
    let out = Command::new(env!("CARGO_BIN_EXE_rlm-forge"))
        .args(["run", cfg.to_str().unwrap()])
        .env_remove(KEY_ENV)
        .env("RUST_LOG", "trace")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(server.join().unwrap().len(), 2);
    assert_clean(dir.path(), &[&out.stdout, &out.stderr]);
    let meta = std::fs::read_to_string(dir.path().join("out/run_meta.json")).unwrap();
    assert!(meta.contains(KEY_ENV));
}

#[test]
fn missing_key_is_a_config_error_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "out",
        &http_body("http://127.0.0.1:9/v1", 0, 1),
    );
    let out = Command::new(env!("CARGO_BIN_EXE_rlm-forge"))
        .args(["run", cfg.to_str().unwrap()])
        .env_remove(KEY_ENV)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(KEY_ENV));
}
