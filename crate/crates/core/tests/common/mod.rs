#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::thread;

/// Minimal chat-completions server: answers every request with `reply` and
/// returns the raw requests once `count` have been served.
pub fn canned_server(count: usize, reply: &str) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let body = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": reply}}],
        "usage": {"prompt_tokens": 100, "completion_tokens": 10}
    })
    .to_string();
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for _ in 0..count {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0u8; content_length];
            reader.read_exact(&mut payload).unwrap();
            head.push_str(&String::from_utf8_lossy(&payload));
            seen.push(head);
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen
    });
    (url, handle)
}

pub fn costs_toml() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/costs.toml")
}

/// Writes a config file into `dir` with the given body, prefixed by the
/// output directory and cost model lines.
pub fn write_config(dir: &Path, name: &str, out: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    let text = format!(
        "output_dir = {:?}\ncost_model = {:?}\n{body}",
        dir.join(out).display().to_string(),
        costs_toml().display().to_string()
    );
    std::fs::write(&path, text).unwrap();
    path
}

/// Every regular file under `dir`, recursively.
pub fn all_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

/// Drops every `"<field>":<number>` pair from JSON text lines.
pub fn strip_numeric_fields(text: &str, fields: &[&str]) -> String {
    let mut out = text.to_string();
    for f in fields {
        let re = regex::Regex::new(&format!(r#""{f}":\d+,?"#)).unwrap();
        out = re.replace_all(&out, "").into_owned();
    }
    out
}
