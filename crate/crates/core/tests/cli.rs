//! Drives the `atlas` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use atlas::sim::{Event, Trace};
use atlas::types::Dot;

fn atlas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atlas")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_owned()
}

const HEALTHY: &str = r#"{"n": 5, "f": 2, "seed": 7, "workload": {"commands_per_client": 10, "conflict_rate": 0.5}}"#;

fn run_into(dir: &Path, sub: &str) -> (Output, String) {
    let cfg = write_config(dir, HEALTHY);
    let out = dir.join(sub);
    let o = atlas(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    (o, out.join("trace.jsonl").to_str().unwrap().to_owned())
}

#[test]
fn run_is_deterministic_and_summarized() {
    let dir = tempfile::tempdir().unwrap();
    let (first, trace_a) = run_into(dir.path(), "a");
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let (second, trace_b) = run_into(dir.path(), "b");
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(fs::read(&trace_a).unwrap(), fs::read(&trace_b).unwrap());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["outcome"], "quiescent");
    assert!(summary["fast_path_ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["config"]["n"], 5);
}

#[test]
fn invalid_config_exits_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"n": 5, "f": 3}"#);
    let o = atlas(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("f"), "{}", String::from_utf8_lossy(&o.stderr));
    let missing = atlas(&["run", "--config", "/nonexistent.json", "--out", "/tmp/x"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(atlas(&["bogus"]).status.code(), Some(2));
}

#[test]
fn check_verdicts_drive_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let (_, trace_path) = run_into(dir.path(), "a");
    let ok = atlas(&["check", &trace_path]);
    assert_eq!(ok.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["checks"]["agreement"]["verdict"], "pass");

    // Tamper with one commit so two processes disagree.
    let mut trace = Trace::from_jsonl(&fs::read_to_string(&trace_path).unwrap()).unwrap();
    let line = trace.lines.iter_mut().find(|l| matches!(l.event, Event::Commit { .. })).unwrap();
    if let Event::Commit { deps, .. } = &mut line.event {
        deps.insert(Dot::new(9, 9));
    }
    let forged = dir.path().join("forged.jsonl");
    fs::write(&forged, trace.to_jsonl()).unwrap();
    let bad = atlas(&["check", forged.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(report["checks"]["agreement"]["verdict"], "fail");
}

#[test]
fn malformed_trace_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let (_, trace_path) = run_into(dir.path(), "a");
    let text = fs::read_to_string(&trace_path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "{\"t\": 1, \"event\": \"sen";
    let broken = dir.path().join("broken.jsonl");
    fs::write(&broken, lines.join("\n")).unwrap();
    let o = atlas(&["check", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 5"), "{}", String::from_utf8_lossy(&o.stderr));

    let truncated = dir.path().join("truncated.jsonl");
    fs::write(&truncated, text.lines().take(10).collect::<Vec<_>>().join("\n")).unwrap();
    assert_eq!(atlas(&["check", truncated.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = atlas(&["sweep", "--seeds", "2", "--rates", "0,1", "--f", "1,2", "--n", "5", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "n,f,rho,seeds,fast_path_ratio,matching_ratio,mean_commit_latency_ms,recoveries,checks_passed");
    assert_eq!(rows.len(), 5);
    // f = 1 always takes the fast path.
    for row in rows[1..].iter().filter(|r| r.starts_with("5,1,")) {
        assert_eq!(row.split(',').nth(4), Some("1.0000"), "{row}");
    }
    assert!(rows[1..].iter().all(|r| r.ends_with(",true")));
}
