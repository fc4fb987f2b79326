#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::thread::JoinHandle;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use slg_cli::service::{self, AppState, ServiceOptions};
use slg_core::graph::Graph;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// The `slg` binary with a clean environment for its own variables.
pub fn slg(cwd: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slg"));
    cmd.current_dir(cwd).env_remove("SLG_OUT_DIR").env_remove("SLG_LOG").env_remove("SLG_API_TOKEN");
    cmd
}

pub fn run(cwd: &Path, args: &[&str]) -> Output {
    slg(cwd).args(args).output().expect("slg runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const FILLER: &[&str] = &[
    "inspect",
    "the",
    "panel",
    "for",
    "cracks",
    "and",
    "corrosion",
    "before",
    "installing",
    "rivets",
    "along",
    "frame",
    "web",
    "replace",
    "damaged",
    "fasteners",
    "with",
    "approved",
    "parts",
    "torque",
    "bolts",
    "to",
    "limits",
    "seal",
    "edges",
    "after",
    "assembly",
];

const TOPICS: &[&str] = &[
    "Aileron", "Elevator", "Rudder", "Flap", "Spar", "Rib", "Stringer", "Bulkhead", "Longeron", "Firewall", "Cowling",
    "Strut", "Axle", "Hinge", "Bracket", "Doubler", "Fairing", "Canopy", "Keel", "Nacelle",
];

/// A markdown manual with `tops` chapters of `subs` sections each. Every
/// section body names a code word that appears nowhere else, e.g. `kwcxb`
/// for section 3.2.
pub fn synthetic_manual(tops: usize, subs: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for i in 1..=tops {
        out.push_str(&format!("# {i} {} Chapter {i}\n\nOverview of chapter {i}.\n\n", TOPICS[i % TOPICS.len()]));
        for j in 1..=subs {
            out.push_str(&format!("## {i}.{j} {} Procedure {i} {j}\n\n", TOPICS[(i * 7 + j) % TOPICS.len()]));
            let n_sentences = rng.gen_range(3..7);
            for s in 0..n_sentences {
                let len = rng.gen_range(6..14);
                let mut words: Vec<&str> = (0..len).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
                let code = code_word(i, j);
                words.insert(rng.gen_range(0..words.len()), &code);
                let mut sentence = words.join(" ");
                sentence[..1].make_ascii_uppercase();
                out.push_str(&sentence);
                out.push_str(if s + 1 == n_sentences { ".\n\n" } else { ". " });
            }
        }
    }
    out
}

/// Every regular file under `dir`, keyed by its path relative to `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// A service on a loopback port, stopped on drop.
pub struct TestServer {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl TestServer {
    pub fn start(graph: Graph, opts: ServiceOptions) -> Self {
        let state = AppState::new(graph, opts).unwrap();
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let serving = state.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
                addr_tx.send(listener.local_addr()?).unwrap();
                service::serve(listener, serving, async {
                    let _ = rx.await;
                })
                .await
            })
        });
        let addr = addr_rx.recv().unwrap();
        Self { addr, state, stop: Some(tx), thread: Some(thread) }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    /// Requests shutdown and waits for the server to drain.
    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap(),
            None => Ok(()),
        }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

/// Status and parsed JSON body; 4xx and 5xx are returned, not raised.
pub fn http(method: &str, url: &str, body: Option<&str>) -> (u16, Value) {
    let req = ureq::request(method, url).set("content-type", "application/json");
    let result = match body {
        Some(b) => req.send_string(b),
        None => req.call(),
    };
    let resp = match result {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(e) => panic!("{method} {url}: {e}"),
    };
    let status = resp.status();
    let text = resp.into_string().unwrap();
    let value = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{method} {url}: non-JSON body {text:?}: {e}"));
    (status, value)
}

/// Checks `value` against a flat schema: key to type name, where a leading
/// `?` marks an optional key and `a|b` allows either type. Extra keys fail.
pub fn check_schema(value: &Value, schema: &Value) -> Result<(), String> {
    let obj = value.as_object().ok_or_else(|| format!("expected an object, got {value}"))?;
    let schema = schema.as_object().expect("schema is an object");
    for (key, ty) in schema {
        let (name, optional) = match key.strip_prefix('?') {
            Some(k) => (k, true),
            None => (key.as_str(), false),
        };
        match obj.get(name) {
            None if optional => {}
            None => return Err(format!("missing key {name:?} in {value}")),
            Some(v) => {
                let ok = ty.as_str().unwrap().split('|').any(|t| match t {
                    "string" => v.is_string(),
                    "number" => v.is_number(),
                    "object" => v.is_object(),
                    "array" => v.is_array(),
                    "null" => v.is_null(),
                    "bool" => v.is_boolean(),
                    other => panic!("unknown schema type {other}"),
                });
                if !ok {
                    return Err(format!("key {name:?} should be {ty}, got {v}"));
                }
            }
        }
    }
    for key in obj.keys() {
        if !schema.contains_key(key) && !schema.contains_key(&format!("?{key}")) {
            return Err(format!("unexpected key {key:?} in {value}"));
        }
    }
    Ok(())
}

/// Every `(key, expected)` of `fields` must equal the value under that key.
pub fn check_fields(value: &Value, fields: Option<&Value>) -> Result<(), String> {
    let Some(fields) = fields.and_then(Value::as_object) else {
        return Ok(());
    };
    for (k, expected) in fields {
        if value.get(k) != Some(expected) {
            return Err(format!("{k}: expected {expected}, got {:?}", value.get(k)));
        }
    }
    Ok(())
}

/// Runs the recorded contract suite against the contract graph, over HTTP
/// and through the `query` command. One result per case.
pub fn run_contract() -> Vec<(String, Result<(), String>)> {
    let dir = fixtures().join("contract");
    let cases: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("cases.json")).unwrap()).unwrap();
    let schemas = &cases["schemas"];
    let graph = slg_cli::load_graph(&dir.join("graph.json")).unwrap();
    let server = TestServer::start(graph, ServiceOptions::default());
    let mut results = Vec::new();

    for case in cases["http"].as_array().unwrap() {
        let name = case["name"].as_str().unwrap().to_string();
        let check = || -> Result<(), String> {
            let (status, body) = http(
                case["method"].as_str().unwrap(),
                &server.url(case["path"].as_str().unwrap()),
                case["body"].as_str(),
            );
            let want = case["status"].as_u64().unwrap() as u16;
            if status != want {
                return Err(format!("status {status}, expected {want}: {body}"));
            }
            let schema = case["schema"].as_str().unwrap();
            check_schema(&body, &schemas[schema])?;
            check_fields(&body, case.get("fields"))?;
            if schema == "error" {
                check_schema(&body["error"], &schemas["error_body"])?;
                if body["error"]["kind"] != case["kind"] {
                    return Err(format!("kind {}, expected {}", body["error"]["kind"], case["kind"]));
                }
            }
            if case["trace"] == Value::Bool(true) {
                check_schema(&body["trace"], &schemas["route_trace"])?;
                check_fields(&body["trace"], case.get("trace_fields"))?;
                let id = body["trace_id"].as_str().ok_or("error response lacks trace_id")?;
                let (s, record) = http("GET", &server.url(&format!("/v1/trace/{id}")), None);
                if s != 200 {
                    return Err(format!("trace {id} not retrievable: {s}"));
                }
                check_schema(&record, &schemas["trace_record"])?;
                if record["error"].as_str().is_none() {
                    return Err("stored trace lacks the error".into());
                }
            }
            if schema == "query_response" {
                let id = body["trace_id"].as_str().unwrap();
                let (s, record) = http("GET", &server.url(&format!("/v1/trace/{id}")), None);
                if s != 200 {
                    return Err(format!("trace {id} not retrievable: {s}"));
                }
                check_schema(&record, &schemas["trace_record"])?;
                if record["resolved_expert"] != body["expert"] || record["expert_answer"] != body["answer"] {
                    return Err(format!("trace {record} disagrees with response {body}"));
                }
            }
            Ok(())
        };
        results.push((format!("http: {name}"), check()));
    }

    for case in cases["cli"].as_array().unwrap() {
        let name = case["name"].as_str().unwrap().to_string();
        let check = || -> Result<(), String> {
            let spec = dir.join("graph.json");
            let mut args = vec!["--graph-spec".to_string(), spec.display().to_string()];
            args.extend(case["args"].as_array().unwrap()[1..].iter().map(|a| a.as_str().unwrap().to_string()));
            let out = slg(&dir).arg(case["args"][0].as_str().unwrap()).args(&args).output().unwrap();
            let want = case["exit"].as_i64().unwrap() as i32;
            if code(&out) != want {
                return Err(format!("exit {}, expected {want}; stderr: {}", code(&out), stderr(&out)));
            }
            let body: Value = serde_json::from_str(&stdout(&out)).map_err(|e| format!("stdout is not JSON: {e}"))?;
            check_schema(&body, &schemas[case["schema"].as_str().unwrap()])?;
            check_fields(&body, case.get("fields"))
        };
        results.push((format!("cli: {name}"), check()));
    }
    server.stop().unwrap();
    results
}

/// The distinctive word of section `i.j` in [`synthetic_manual`].
pub fn code_word(i: usize, j: usize) -> String {
    let letter = |n: usize| char::from(b'a' + (n % 26) as u8);
    format!("kw{}x{}", letter(i), letter(j))
}
