use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_trust-ladder"));
    c.env_remove("TRUST_LADDER_OUT").env_remove("TRUST_LADDER_SERVER");
    c
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/basic.json")
}

fn run_into(dir: &Path) -> Output {
    bin()
        .args(["run", "--seed", "7", "--ticks", "50", "--scenario"])
        .arg(fixture())
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["events.jsonl", "metrics.csv", "trajectory.json"]);
    let text = stdout(&out);
    assert!(text.contains("final system trust"), "{text}");
    assert!(text.contains("gate enter-hazard-zone"), "{text}");
}

#[test]
fn identical_runs_write_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_into(a.path());
    run_into(b.path());
    for f in ["events.jsonl", "metrics.csv", "trajectory.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn out_dir_defaults_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = bin()
        .args(["run", "--ticks", "3", "--scenario"])
        .arg(fixture())
        .env("TRUST_LADDER_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("trajectory.json").exists());
}

#[test]
fn replay_accepts_the_original_and_rejects_a_tampered_log() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path());
    let log = dir.path().join("events.jsonl");
    let ok = bin()
        .args(["replay", "--seed", "7", "--scenario"])
        .arg(fixture())
        .arg("--log")
        .arg(&log)
        .arg("--trajectory")
        .arg(dir.path().join("trajectory.json"))
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let text = std::fs::read_to_string(&log).unwrap();
    let tampered = text.replacen(r#""outcome":"success""#, r#""outcome":"failure""#, 1);
    assert_ne!(text, tampered);
    std::fs::write(&log, tampered).unwrap();
    let bad = bin()
        .args(["replay", "--seed", "7", "--scenario"])
        .arg(fixture())
        .arg("--log")
        .arg(&log)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("verification failed"));
}

#[test]
fn replay_with_another_seed_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path());
    let out = bin()
        .args(["replay", "--seed", "8", "--scenario"])
        .arg(fixture())
        .arg("--log")
        .arg(dir.path().join("events.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let out = bin().args(["run", "--ticks", "5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--scenario"));
    let out = bin().args(["run", "--ticks", "0", "--scenario"]).arg(fixture()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["run", "--scenario", "/nonexistent/scenario.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().arg("fly").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_converts_a_trajectory_to_csv() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path());
    let conv = dir.path().join("converted");
    let out = bin()
        .args(["export", "--format", "csv", "--trajectory"])
        .arg(dir.path().join("trajectory.json"))
        .arg("--out")
        .arg(&conv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(conv.join("metrics.csv")).unwrap(),
        std::fs::read(dir.path().join("metrics.csv")).unwrap()
    );
}

#[test]
fn serve_and_client_subcommands_talk_to_each_other() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut server = bin()
        .args(["serve", "--paused", "--ticks", "5", "--tick-ms", "5", "--exit-when-done", "--port"])
        .arg(port.to_string())
        .arg("--scenario")
        .arg(fixture())
        .arg("--out")
        .arg(dir.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut first = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut first).unwrap();
    assert!(first.starts_with("serving on"), "{first}");
    let url = format!("http://127.0.0.1:{port}");

    let state = bin().args(["state", "--server", &url]).output().unwrap();
    assert_eq!(state.status.code(), Some(0));
    assert!(stdout(&state).contains("\"paused\": true"));
    let bad = bin()
        .args(["command", "move", "--agent", "robot-9", "--to", "1,2", "--server", &url])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("unknown-agent"));
    let ok = bin()
        .args(["command", "move", "--agent", "robot-1", "--to", "1,2", "--server", &url])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let resume = bin().args(["command", "resume", "--server", &url]).output().unwrap();
    assert_eq!(resume.status.code(), Some(0));
    let watch = bin().args(["watch", "--server", &url]).output().unwrap();
    assert_eq!(watch.status.code(), Some(0));
    assert_eq!(stdout(&watch).lines().count(), 6);

    assert!(server.wait().unwrap().success());
    for f in ["commands.jsonl", "events.jsonl", "trajectory.json", "metrics.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let replayed = bin()
        .args(["replay", "--scenario"])
        .arg(fixture())
        .arg("--log")
        .arg(dir.path().join("events.jsonl"))
        .arg("--trajectory")
        .arg(dir.path().join("trajectory.json"))
        .output()
        .unwrap();
    assert_eq!(replayed.status.code(), Some(0), "{}", String::from_utf8_lossy(&replayed.stderr));
}
