use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use repot_core::env::EnvId;
use repot_core::gateway::*;
use repot_core::zoo::PromptMode;

fn sandbox(wall_ms: u64) -> Sandbox {
    let mut cfg = SandboxConfig::default();
    cfg.limits.wall_ms = wall_ms;
    Sandbox::new(cfg).expect("python3 available")
}

#[test]
fn program_output_is_captured() {
    let r = sandbox(10_000).execute("print('moves = [move(1,0,2)]')");
    assert_eq!(r.exit_status, 0, "{}", r.stderr);
    assert!(!r.timed_out);
    assert!(r.stdout.lines().any(|l| l == "moves = [move(1,0,2)]"));
}

#[test]
fn infinite_loop_times_out() {
    let start = std::time::Instant::now();
    let r = sandbox(500).execute("while True:\n    pass\n");
    assert!(r.timed_out);
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn stderr_only_yields_no_plan() {
    let s = sandbox(10_000);
    let r = s.execute("import sys\nsys.stderr.write('moves = []\\n')\n");
    assert!(r.stdout.is_empty());
    assert!(r.stderr.contains("moves"));
    let c = "```python\nimport sys\nsys.stderr.write('moves = []\\n')\n```";
    assert_eq!(extract_plan(EnvId::Hanoi, c, PromptMode::Pot, &s), Err(ExtractionError::NoPlan));
}

#[test]
fn programs_cannot_read_repo_files() {
    let manifest = concat!(env!("CARGO_MANIFEST_DIR"), "/Cargo.toml");
    let code = format!("try:\n    open({manifest:?}).read()\n    print('READ')\nexcept PermissionError:\n    print('DENIED')\n");
    let r = sandbox(10_000).execute(&code);
    assert_eq!(r.stdout.trim(), "DENIED", "{}", r.stderr);
}

#[test]
fn programs_cannot_open_sockets() {
    let code = "import socket\ntry:\n    socket.socket()\n    print('OPEN')\nexcept PermissionError:\n    print('DENIED')\n";
    let r = sandbox(10_000).execute(code);
    assert_eq!(r.stdout.trim(), "DENIED", "{}", r.stderr);
}

#[test]
fn programs_cannot_spawn_processes() {
    let code = "import os\ntry:\n    os.system('true')\n    print('RAN')\nexcept PermissionError:\n    print('DENIED')\n";
    let r = sandbox(10_000).execute(code);
    assert_eq!(r.stdout.trim(), "DENIED", "{}", r.stderr);
}

#[test]
fn programs_may_use_their_temp_dir_and_stdlib() {
    let code = "import json, itertools\nopen('x.txt','w').write('1')\nprint('moves = [' + open('x.txt').read() + ']')\n";
    let r = sandbox(10_000).execute(code);
    assert_eq!(r.stdout.trim(), "moves = [1]", "{}", r.stderr);
}

#[test]
fn memory_limit_is_enforced() {
    let mut cfg = SandboxConfig::default();
    cfg.limits.mem_bytes = 256 << 20;
    let r = Sandbox::new(cfg).unwrap().execute("x = bytearray(1 << 30)\nprint('ALLOCATED')\n");
    assert_ne!(r.exit_status, 0);
    assert!(!r.stdout.contains("ALLOCATED"));
}

#[test]
fn missing_interpreter_fails_at_construction() {
    let cfg = SandboxConfig { interpreter: vec!["/nonexistent/python9".into()], ..SandboxConfig::default() };
    assert!(matches!(Sandbox::new(cfg), Err(SandboxError::InterpreterMissing { .. })));
}

/// Serves `bodies` in order, one connection each, and records request bodies.
fn stub_server(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut req = vec![0; len];
            reader.read_exact(&mut req).unwrap();
            seen.push(String::from_utf8(req).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen
    });
    (url, handle)
}

fn fast(url: String) -> RemoteBackend {
    let mut cfg = RemoteConfig::new(url, "stub-model");
    cfg.initial_backoff = Duration::from_millis(10);
    cfg.api_key = Some("k".into());
    RemoteBackend::new(cfg)
}

const OK_BODY: &str =
    r#"{"choices":[{"message":{"content":"moves = [move(1,0,2)]"}}],"usage":{"prompt_tokens":11,"completion_tokens":7}}"#;

#[test]
fn remote_round_trip() {
    let (url, server) = stub_server(vec![(200, OK_BODY.into())]);
    let b = fast(url);
    let r = b.complete(CallContext { key: "p", ordinal: 0 }, &CompletionRequest::new("solve"));
    assert_eq!(r.text, "moves = [move(1,0,2)]");
    assert!(r.backend_error.is_none());
    assert!(r.latency_ms > 0);
    assert_eq!((r.prompt_tokens, r.completion_tokens, r.token_source), (11, 7, TokenSource::Provider));
    let sent: serde_json::Value = serde_json::from_str(&server.join().unwrap()[0]).unwrap();
    assert_eq!(sent["model"], "stub-model");
    assert_eq!(sent["temperature"], 0.0);
    assert_eq!(sent["max_tokens"], 16384);
    assert_eq!(sent["messages"][0]["content"], "solve");
}

#[test]
fn remote_retries_server_errors() {
    let (url, server) = stub_server(vec![(503, "{}".into()), (200, OK_BODY.into())]);
    let r = fast(url).complete(CallContext { key: "p", ordinal: 0 }, &CompletionRequest::new("solve"));
    assert!(r.backend_error.is_none());
    assert_eq!(server.join().unwrap().len(), 2);
}

#[test]
fn remote_auth_failure_is_a_backend_error() {
    let (url, server) = stub_server(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let r = fast(url).complete(CallContext { key: "p", ordinal: 0 }, &CompletionRequest::new("solve"));
    assert!(r.text.is_empty());
    assert!(r.backend_error.unwrap().contains("401"));
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn remote_transport_failure_after_retries() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    drop(listener);
    let r = fast(url).complete(CallContext { key: "p", ordinal: 0 }, &CompletionRequest::new("solve"));
    assert!(r.backend_error.unwrap().contains("transport"));
}
