#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::{Arc, Mutex};

use nds_core::manifest::DatasetManifest;
use nds_lab::fixture::{Fixture, FixtureConfig};
use serde_json::Value;

pub const NDS: &str = env!("CARGO_BIN_EXE_nds");

/// A `nds serve` child process, killed on drop.
pub struct Server {
    pub child: Child,
    pub url: String,
}

impl Server {
    pub fn start(store: &Path) -> Server {
        let mut child = Command::new(NDS)
            .args(["serve", "--addr", "127.0.0.1:0", "--store"])
            .arg(store)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn nds serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_owned();
        Server { child, url }
    }

    /// SIGKILL, no graceful shutdown.
    pub fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn nds(server: &str, args: &[&str]) -> Output {
    Command::new(NDS)
        .args(args)
        .env("SERVER_URL", server)
        .env_remove("SEED")
        .output()
        .expect("run nds")
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "nds failed with {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub struct FixtureFiles {
    pub fixture: Fixture,
    pub source: PathBuf,
    pub target: PathBuf,
}

pub fn write_fixture(dir: &Path, cfg: &FixtureConfig) -> FixtureFiles {
    let fixture = Fixture::generate(cfg);
    let source = dir.join("source.jsonl");
    let target = dir.join("target.jsonl");
    fixture.source.save(&source).unwrap();
    fixture.target.save(&target).unwrap();
    FixtureFiles {
        fixture,
        source,
        target,
    }
}

pub fn small_fixture() -> FixtureConfig {
    FixtureConfig {
        items_per_blob: 120,
        target_size: 40,
        test_size: 10,
        ..FixtureConfig::default()
    }
}

/// One HTTP request as seen on the wire.
#[derive(Debug, Clone)]
pub struct Captured {
    pub head: String,
    pub body: Vec<u8>,
}

/// Recording reverse proxy in front of `upstream`.
pub struct Capture {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Captured>>>,
}

fn read_request(stream: &mut BufReader<TcpStream>) -> Option<Captured> {
    let mut head = String::new();
    loop {
        let mut line = String::new();
        if stream.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let end = line == "\r\n";
        head.push_str(&line);
        if end {
            break;
        }
    }
    let length = head
        .lines()
        .find_map(|l| {
            let (k, v) = l.split_once(':')?;
            k.eq_ignore_ascii_case("content-length")
                .then(|| v.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);
    let mut body = vec![0; length];
    stream.read_exact(&mut body).ok()?;
    Some(Captured { head, body })
}

fn forward(upstream: &str, req: &Captured) -> std::io::Result<Vec<u8>> {
    let mut conn = TcpStream::connect(upstream)?;
    let mut lines = req.head.lines();
    let mut out = format!("{}\r\n", lines.next().unwrap_or_default());
    for l in lines.filter(|l| !l.is_empty()) {
        if !l.to_ascii_lowercase().starts_with("connection:") {
            out.push_str(l);
            out.push_str("\r\n");
        }
    }
    out.push_str("connection: close\r\n\r\n");
    conn.write_all(out.as_bytes())?;
    conn.write_all(&req.body)?;
    let mut response = Vec::new();
    conn.read_to_end(&mut response)?;
    Ok(response)
}

impl Capture {
    pub fn start(upstream_url: &str) -> Capture {
        let upstream = upstream_url.trim_start_matches("http://").to_owned();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let log = log.clone();
                let upstream = upstream.clone();
                std::thread::spawn(move || {
                    let mut writer = stream.try_clone().unwrap();
                    let mut reader = BufReader::new(stream);
                    // One request per connection: the forwarded response
                    // carries `connection: close`.
                    if let Some(req) = read_request(&mut reader) {
                        log.lock().unwrap().push(req.clone());
                        if let Ok(resp) = forward(&upstream, &req) {
                            let _ = writer.write_all(&resp);
                        }
                    }
                });
            }
        });
        Capture { url, requests }
    }

    pub fn take(&self) -> Vec<Captured> {
        std::mem::take(&mut *self.requests.lock().unwrap())
    }
}

const REQUEST_KEYS: [&str; 5] = ["report", "budget", "budget_bytes", "temperature", "seed"];
const REPORT_KEYS: [&str; 6] = ["dataset_ref", "mode", "z", "target_size", "client_nonce", "probe"];

/// Everything that identifies target items: ids, feature values, encoded images.
fn target_fingerprints(target: &DatasetManifest) -> Vec<String> {
    let mut marks = Vec::new();
    for line in target.to_jsonl().lines() {
        let Ok(Value::Object(item)) = serde_json::from_str::<Value>(line) else {
            continue;
        };
        if let Some(Value::String(id)) = item.get("id") {
            marks.push(id.clone());
        }
        if let Some(Value::Array(features)) = item.get("features") {
            marks.extend(features.iter().take(4).map(|f| f.to_string()));
        }
        if let Some(Value::Object(image)) = item.get("image") {
            marks.extend(
                image
                    .values()
                    .filter_map(Value::as_str)
                    .filter(|s| s.len() > 16)
                    .map(str::to_owned),
            );
        }
    }
    marks
}

/// Checks captured traffic against the privacy schema. Returns every violation.
pub fn privacy_violations(requests: &[Captured], target: &DatasetManifest) -> Vec<String> {
    let marks = target_fingerprints(target);
    let mut problems = Vec::new();
    for req in requests {
        let line = req.head.lines().next().unwrap_or_default().to_owned();
        let text = String::from_utf8_lossy(&req.body);
        let wire = format!("{}{}", req.head, text);
        if let Some(m) = marks.iter().find(|m| wire.contains(m.as_str())) {
            problems.push(format!("{line}: carries target data `{m}`"));
        }
        if line.starts_with("POST /v1/recommendations") {
            match serde_json::from_slice::<Value>(&req.body) {
                Ok(Value::Object(body)) => {
                    for k in body.keys().filter(|k| !REQUEST_KEYS.contains(&k.as_str())) {
                        problems.push(format!("{line}: unexpected field `{k}`"));
                    }
                    match body.get("report") {
                        Some(Value::Object(report)) => {
                            for k in report.keys().filter(|k| !REPORT_KEYS.contains(&k.as_str())) {
                                problems.push(format!("{line}: unexpected report field `{k}`"));
                            }
                            let z_ok = report
                                .get("z")
                                .and_then(Value::as_array)
                                .is_some_and(|z| z.iter().all(Value::is_number));
                            if !z_ok {
                                problems.push(format!("{line}: z is not a list of numbers"));
                            }
                        }
                        _ => problems.push(format!("{line}: missing report")),
                    }
                }
                _ => problems.push(format!("{line}: body is not a JSON object")),
            }
        } else if line.starts_with("GET") && !req.body.is_empty() {
            problems.push(format!("{line}: GET with a body"));
        }
    }
    problems
}
