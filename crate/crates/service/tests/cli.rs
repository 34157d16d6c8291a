mod common;

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn evrag() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_evrag"));
    c.env_remove("EMBED_ENDPOINT")
        .env_remove("LLM_ENDPOINT")
        .env("NCBI_BASE_URL", "http://127.0.0.1:9/");
    c
}

fn run(args: &[&str]) -> Output {
    evrag().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn build_index(dir: &Path) -> std::path::PathBuf {
    let manifest = common::fixtures().join("corpus/manifest.json");
    let texts = dir.join("texts");
    let chunks = dir.join("chunks.jsonl");
    let vectors = dir.join("vectors.bin");
    let index = dir.join("index.evrx");
    ok(&["ingest", "--manifest", p(&manifest), "--out", p(&texts)]);
    assert!(texts.join("report.json").exists());
    assert!(texts.join("cocaine.txt").exists());
    ok(&["chunk", "--manifest", p(&manifest), "--texts", p(&texts), "--out", p(&chunks), "--target", "400"]);
    ok(&["embed", "--chunks", p(&chunks), "--out", p(&vectors), "--dim", "256"]);
    ok(&["index", "build", "--chunks", p(&chunks), "--vectors", p(&vectors), "--out", p(&index)]);
    index
}

#[test]
fn pipeline_builds_a_queryable_index() {
    let dir = tempfile::tempdir().unwrap();
    let index = build_index(dir.path());
    let out = ok(&[
        "index", "query", "--index", p(&index), "--text", "cocaine heart attack", "--k", "3", "--dim", "256",
    ]);
    let v: Value = serde_json::from_str(&out).unwrap();
    let hits = v["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 3);
    assert_eq!(hits[0]["payload"]["doc_id"], "cocaine");

    // Wrong embedder dimension is the caller's mistake.
    let out = run(&["index", "query", "--index", p(&index), "--text", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn user_errors_exit_one() {
    let out = run(&["index", "query", "--text", "cocaine"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--index"));

    let out = run(&["ingest", "--manifest", "/nonexistent/manifest.json", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn eval_commands() {
    let questions = common::fixtures().join("eval/questions50.txt");
    let kept = ok(&["eval", "dedup", "--in", p(&questions), "--threshold", "0.90"]);
    assert_eq!(kept.lines().count(), 30);
    let json: Value = serde_json::from_str(&ok(&["eval", "dedup", "--in", p(&questions), "--format", "json"])).unwrap();
    assert_eq!(json["removed_pairs"].as_array().unwrap().len(), 20);

    let ratings = common::fixtures().join("eval/ratings.csv");
    let table = ok(&["eval", "summarize", "--in", p(&ratings), "--by", "criterion"]);
    assert!(table.contains("factual_accuracy"), "{table}");
    let by_cat: Value =
        serde_json::from_str(&ok(&["eval", "summarize", "--in", p(&ratings), "--by", "category", "--format", "json"])).unwrap();
    assert_eq!(by_cat["rows"].as_array().unwrap().len(), 5);
    let kappa: Value = serde_json::from_str(&ok(&["eval", "kappa", "--in", p(&ratings), "--format", "json"])).unwrap();
    assert_eq!(kappa["pairs"], 360);
}

#[test]
fn mcp_serve_answers_over_stdio() {
    let mut child = evrag()
        .arg("mcp-serve")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        writeln!(stdin, r#"{{"jsonrpc":"2.0","id":1,"method":"tools/list"}}"#).unwrap();
        writeln!(stdin, "garbage").unwrap();
    }
    drop(child.stdin.take());
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["result"]["tools"][0]["name"], "literature_search");
    assert_eq!(lines[1]["error"]["code"], -32700);
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http(port: u16, request: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(30))).ok()?;
    s.write_all(request.as_bytes()).ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

fn body(response: &str) -> Value {
    serde_json::from_str(response.split("\r\n\r\n").nth(1).unwrap()).unwrap()
}

#[test]
fn serve_answers_health_and_chat() {
    let dir = tempfile::tempdir().unwrap();
    let index = build_index(dir.path());
    let sessions = dir.path().join("sessions");
    let port = free_port();
    let mut child = evrag()
        .args(["serve", "--index", p(&index), "--dim", "256", "--no-literature"])
        .args(["--bind", &format!("127.0.0.1:{port}"), "--sessions-dir", p(&sessions)])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();

    let deadline = Instant::now() + Duration::from_secs(30);
    let health = loop {
        if let Some(r) = http(port, "GET /api/health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n") {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(100));
    };
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    let h = body(&health);
    assert_eq!(h["index"]["loaded"], true);
    assert_eq!(h["literature_enabled"], false);

    let msg = r#"{"message":"What schedule is methamphetamine?"}"#;
    let req = format!(
        "POST /api/chat HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{msg}",
        msg.len()
    );
    let chat = http(port, &req).unwrap();
    assert!(chat.starts_with("HTTP/1.1 200"), "{chat}");
    let c = body(&chat);
    assert_eq!(c["local_sources"].as_array().unwrap().len(), 3);
    assert_eq!(c["route"], "regulatory");
    let _ = child.kill();
    let _ = child.wait();
    assert_eq!(std::fs::read_dir(&sessions).unwrap().count(), 1);
}

#[test]
fn serve_rejects_mismatched_index() {
    let dir = tempfile::tempdir().unwrap();
    let index = build_index(dir.path());
    let out = run(&["serve", "--index", p(&index), "--bind", "127.0.0.1:0", "--sessions-dir", p(&dir.path().join("s"))]);
    assert_eq!(out.status.code(), Some(1));
}
