use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lachesis_core::export::{read_any, write_log};
use lachesis_core::peering::child_event;
use lachesis_core::{EventBlock, NodeId, OperaChain};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn lachesis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lachesis")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_events(dir: &Path, name: &str, events: &[EventBlock]) -> PathBuf {
    let path = dir.join(name);
    let mut bytes = Vec::new();
    write_log(&mut bytes, events).unwrap();
    std::fs::write(&path, bytes).unwrap();
    path
}

fn golden_events() -> Vec<EventBlock> {
    read_any(&std::fs::read(fixture("five.log")).unwrap()).unwrap()
}

#[test]
fn simulate_reproduces_the_golden_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let run =
        lachesis(&["simulate", "--config", fixture("five.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", text(&run.stderr));
    assert!(text(&run.stderr).contains("violations=0"));
    assert_eq!(std::fs::read(out.join("events.log")).unwrap(), std::fs::read(fixture("five.log")).unwrap());
    for file in ["report.json", "trace.jsonl", "stats.csv", "main_chain.jsonl", "order.jsonl", "dot/frame-0001.dot"] {
        assert!(out.join(file).is_file(), "{file}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["trace_hash"], "4165354c43a95a2aab91e26124cae6418bfc2c14ad34650d1e8effc70ba97e8a");
    let csv = text(&std::fs::read(out.join("stats.csv")).unwrap());
    assert!(csv.starts_with("round,frames,roots,clothos,atropos,finalized\n"));
}

#[test]
fn seed_flag_overrides_the_config() {
    let config = fixture("five.toml");
    let a = lachesis(&["simulate", "--config", config.to_str().unwrap(), "--seed", "2", "--format", "csv"]);
    let b = lachesis(&["simulate", "--config", config.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&a), 0);
    assert!(text(&a.stderr).starts_with("seed 2:"));
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn seed_ranges_get_one_directory_each() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("many");
    let run = lachesis(&[
        "simulate",
        "--config",
        fixture("five.toml").to_str().unwrap(),
        "--seeds",
        "3..6",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", text(&run.stderr));
    let lines: Vec<String> = text(&run.stderr).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 3);
    for (seed, line) in (3..6).zip(&lines) {
        assert!(line.starts_with(&format!("seed {seed}:")));
        assert!(out.join(format!("seed-{seed}/events.log")).is_file());
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = lachesis(&["simulate", "--config", "/no/such/config.toml"]);
    assert_eq!(code(&missing), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "n = 4\nk = 9\nseed = 1\ntarget_events = 10\n").unwrap();
    let invalid = lachesis(&["simulate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&invalid), 2);
    assert!(text(&invalid.stderr).contains("k = 9"));

    let unknown = dir.path().join("typo.json");
    std::fs::write(&unknown, r#"{"n": 4, "k": 3, "seed": 1, "target_events": 10, "nodes": 4}"#).unwrap();
    assert_eq!(code(&lachesis(&["simulate", "--config", unknown.to_str().unwrap()])), 2);

    let range = lachesis(&["simulate", "--config", fixture("five.toml").to_str().unwrap(), "--seeds", "5..1"]);
    assert_eq!(code(&range), 2);
}

#[test]
fn verify_accepts_the_golden_log() {
    let run = lachesis(&[
        "verify",
        fixture("five.log").to_str().unwrap(),
        "--config",
        fixture("five.toml").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", text(&run.stdout));
    assert!(text(&run.stdout).starts_with("ok: 60 events"));
    // inferred parameters give the same answer
    assert_eq!(code(&lachesis(&["verify", fixture("five.log").to_str().unwrap()])), 0);
}

#[test]
fn verify_reports_forks_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let mut events = golden_events();
    let mut chain = OperaChain::new(5, 3);
    for ev in &events {
        chain.insert(ev.clone()).unwrap();
    }
    // a second child of creator 2's third event, over two later tops
    let base = chain.iter().find(|e| e.creator() == NodeId(2) && e.seq() == 2).unwrap().clone();
    let others: Vec<_> = [NodeId(0), NodeId(4)].iter().map(|&c| chain.head(c).unwrap().id()).collect();
    let twin = child_event(&chain, &base, &others, b"twin".to_vec());
    events.push(twin);
    let log = write_events(dir.path(), "forked.log", &events);
    let run = lachesis(&["verify", log.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", text(&run.stdout));
    let out = text(&run.stdout);
    assert!(out.contains("skipped (forked chain)"));
    assert!(out.lines().filter(|l| l.starts_with("fork: ")).count() >= 1);
}

#[test]
fn verify_fails_on_a_dangling_parent() {
    let dir = tempfile::tempdir().unwrap();
    let mut events = golden_events();
    events.remove(7);
    let log = write_events(dir.path(), "truncated.log", &events);
    let run = lachesis(&["verify", log.to_str().unwrap()]);
    assert_eq!(code(&run), 1);
    assert!(text(&run.stdout).contains("missing parent"), "{}", text(&run.stdout));
}

#[test]
fn verify_rejects_garbage_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.log");
    std::fs::write(&path, b"not a log at all").unwrap();
    assert_eq!(code(&lachesis(&["verify", path.to_str().unwrap()])), 2);
}

#[test]
fn export_matches_the_golden_dot() {
    let run = lachesis(&["export-dot", fixture("five.log").to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    assert_eq!(text(&run.stdout), std::fs::read_to_string(fixture("five.dot")).unwrap());
}

#[test]
fn export_ranges() {
    let log = fixture("five.log");
    let log = log.to_str().unwrap();
    let empty = lachesis(&["export-dot", log, "--frames", "4..4"]);
    assert_eq!(code(&empty), 0);
    assert_eq!(text(&empty.stdout).lines().count(), 4);

    let some = lachesis(&["export-dot", log, "--frames", "2..=3"]);
    let dot = text(&some.stdout);
    assert!(dot.contains("tooltip=\"frame 2\"") && dot.contains("tooltip=\"frame 3\""));
    assert!(!dot.contains("tooltip=\"frame 1\"") && !dot.contains("tooltip=\"frame 4\""));

    assert_eq!(code(&lachesis(&["export-dot", log, "--frames", "99"])), 2);
    assert_eq!(code(&lachesis(&["export-dot", log, "--frames", "0..2"])), 2);
    assert_eq!(code(&lachesis(&["export-dot", log, "--frames", "3..1"])), 2);
    assert_eq!(code(&lachesis(&["export-dot", log, "--frames", "two"])), 2);
}
