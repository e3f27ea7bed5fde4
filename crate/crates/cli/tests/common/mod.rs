#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::Value;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Copies the bundled fixtures into `dir` and points the config's output
/// directories inside it. Returns the config path.
pub fn stage_fixtures(dir: &Path) -> PathBuf {
    for entry in std::fs::read_dir(fixtures_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "jsonl" || e == "json") {
            std::fs::copy(&p, dir.join(p.file_name().unwrap())).unwrap();
        }
    }
    let cfg_path = dir.join("config.json");
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
    cfg["artifacts_dir"] = "artifacts".into();
    cfg["output_dir"] = "out".into();
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    cfg_path
}

pub fn edit_config(path: &Path, f: impl FnOnce(&mut Value)) {
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut cfg);
    std::fs::write(path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub body: Value,
}

/// Minimal HTTP/1.1 JSON server for the adapter wire contracts.
///
/// `POST /score` `{"id","text"}` -> `{"score"}` (character count / 10),
/// `POST /support` `{"prompt"}` -> `{"verdict","confidence"}`,
/// `POST /translate` `{"text","src","tgt"}` -> `{"text"}` (tagged with the target),
/// anything else -> 404.
pub struct FixtureServer {
    pub base: String,
    pub log: Arc<Mutex<Vec<Recorded>>>,
}

impl FixtureServer {
    pub fn start() -> FixtureServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let shared = Arc::clone(&log);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let log = Arc::clone(&shared);
                thread::spawn(move || handle(stream, log));
            }
        });
        FixtureServer { base, log }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn requests(&self, path: &str) -> Vec<Value> {
        self.log.lock().unwrap().iter().filter(|r| r.path == path).map(|r| r.body.clone()).collect()
    }
}

fn handle(stream: std::net::TcpStream, log: Arc<Mutex<Vec<Recorded>>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut stream = stream;
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let parsed: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    log.lock().unwrap().push(Recorded { path: path.clone(), body: parsed.clone() });

    let (status, reply) = match path.as_str() {
        "/score" => {
            let n = parsed["text"].as_str().map_or(0, |t| t.chars().count());
            ("200 OK", serde_json::json!({ "score": n as f64 / 10.0 }).to_string())
        }
        "/support" => ("200 OK", r#"{"verdict":"llm","confidence":0.8}"#.to_string()),
        "/support-garbage" => ("200 OK", "not json".to_string()),
        "/translate" => {
            let text = parsed["text"].as_str().unwrap_or("");
            let tgt = parsed["tgt"].as_str().unwrap_or("");
            let out = match text.strip_prefix("[en]") {
                Some(rest) if tgt == "zh" => rest.to_string(),
                _ => format!("[{tgt}]{text}"),
            };
            ("200 OK", serde_json::json!({ "text": out }).to_string())
        }
        _ => ("404 Not Found", "{}".to_string()),
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
}
