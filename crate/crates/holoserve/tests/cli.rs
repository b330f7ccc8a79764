use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

fn holodeck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holodeck"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("HOLODECK_CONFIG")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CUBE: &str = "\
v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1
f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 2 3 7 6\nf 3 4 8 7\nf 4 1 5 8
";

#[test]
fn mesh_cube_to_scene() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("cube.obj");
    std::fs::write(&obj, CUBE).unwrap();
    let scene = dir.path().join("out/cube.hdsc");
    std::fs::create_dir_all(scene.parent().unwrap()).unwrap();
    let report = dir.path().join("rep.json");
    let out = holodeck(&["mesh", path(&obj), "--target-tris", "12", "--out", path(&scene), "--report", path(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(&scene).unwrap();
    assert_eq!(&bytes[..4], b"HDSC");
    let s = holodeck_core::meshline::read_scene(bytes.as_slice()).unwrap();
    assert_eq!(s.triangle_count(), 12);
    let rep: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(rep["triangles"], json!(12));
    assert!(scene.with_extension("obj").exists());
}

#[test]
fn mesh_reports_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("bad.obj");
    std::fs::write(&obj, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n").unwrap();
    let scene = dir.path().join("bad.hdsc");
    let out = holodeck(&["mesh", path(&obj), "--out", path(&scene)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    assert!(!scene.exists());
}

#[test]
fn usage_errors_exit_2() {
    for args in [&["mesh", "--bogus"][..], &["frobnicate"], &["latency"], &[]] {
        let out = holodeck(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
    let out = holodeck(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("inject"));
}

#[test]
fn sim_then_latency_gate() {
    let dir = tempfile::tempdir().unwrap();
    let bodies = dir.path().join("bodies.json");
    let spec = dir.path().join("spec.json");
    let rec = dir.path().join("walk.hdrc");
    let out = holodeck(&["constellations", "--count", "2", "--out", path(&bodies)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&std::fs::read(&bodies).unwrap()).unwrap();
    assert_eq!(doc["bodies"].as_array().unwrap().len(), 2);

    std::fs::write(
        &spec,
        json!({ "duration_s": 2.0, "path": { "kind": "circular_walk", "center": [0, 0], "radius_m": 1.0, "speed_mps": 0.8 } }).to_string(),
    )
    .unwrap();
    let out = holodeck(&["sim", "--spec", path(&spec), "--bodies", path(&bodies), "--out", path(&rec)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(rec.exists());

    let out = holodeck(&["latency", "--recording", path(&rec), "--inject-delay-ms", "25"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], json!(false));
    assert!(report["end_to_end"]["p99"].as_u64().unwrap() >= 25_000_000);

    let out = holodeck(&["latency", "--recording", path(&rec)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let out = holodeck(&["sim", "--spec", path(&spec), "--bodies", path(&dir.path().join("missing.json")), "--out", path(&rec)]);
    assert_eq!(out.status.code(), Some(1));
}

fn http_get(addr: &str, uri: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {uri} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut text = String::new();
    s.read_to_string(&mut text).unwrap();
    text
}

#[test]
fn serve_reads_config_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("net");
    let out = holodeck(&["synth", "--neurons", "300", "--connections", "1000", "--out", path(&data)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let config = dir.path().join("service.json");
    std::fs::write(&config, json!({ "listen": "127.0.0.1:0", "pose_port": 0, "datasets": ["net/manifest.json"] }).to_string()).unwrap();

    let mut child = Command::new(env!("CARGO_BIN_EXE_holodeck"))
        .arg("serve")
        .env("HOLODECK_CONFIG", &config)
        .env("RUST_LOG", "info")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let start = Instant::now();
    let addr = loop {
        assert!(start.elapsed() < Duration::from_secs(30), "server never reported its address");
        let line = lines.next().expect("server exited").unwrap();
        if let Some(rest) = line.split("listening on ").nth(1) {
            break rest.split(';').next().unwrap().to_string();
        }
    };
    let health = http_get(&addr, "/health");
    let datasets = http_get(&addr, "/datasets");
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(datasets.contains("\"neurons\":300"), "{datasets}");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"listen":"127.0.0.1:0","pose_port":0,"datasets":[],"sesion_grace_s":3}"#).unwrap();
    let out = holodeck(&["serve", "--config", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sesion_grace_s"));
}
