use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nbitms"));
    c.env_remove("NBITMS_LISTEN").env_remove("NBITMS_STATE_DIR").env_remove("NBITMS_LOG");
    c
}

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo/nbitms.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_demo_config() {
    let o = run(&["validate", "--config", demo().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ok, 8 objects"));
}

#[test]
fn validate_reports_parse_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\n  \"objects\": [\n    ,\n  ]\n}\n").unwrap();
    let o = run(&["validate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn validate_missing_file_is_config_error() {
    let o = run(&["validate", "--config", "/nonexistent/nbitms.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_text_and_json() {
    let o = run(&["eval"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let first = text.lines().find(|l| l.starts_with("1 ")).unwrap();
    assert!(first.contains("NB-ITMS"), "{text}");

    let o = run(&["eval", "--json", "--window", "0:3600"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ranking"][0], "NB-ITMS");
}

#[test]
fn eval_rejects_inverted_window() {
    let o = run(&["eval", "--window", "5:1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn one_shot_check() {
    let o = run(&["check", "core-router", "--config", demo().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("core-router: OK - "), "{}", stdout(&o));

    let o = run(&["check", "no-such-object", "--config", demo().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sim_lists_agents_and_exits() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("fleet.json");
    std::fs::write(
        &p,
        r#"{"devices": [{"id": "x", "sys_object_id": "1.3.6.1.4.1.9.1.1"}, {"id": "y", "sys_object_id": "1.3.6.1.4.1.9.1.1"}]}"#,
    )
    .unwrap();
    let o = run(&["sim", "--fleet", p.to_str().unwrap(), "--for-s", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("x\t127.0.0.1:"));
    assert!(lines[1].starts_with("y\t127.0.0.1:"));
}

#[test]
fn unusable_listen_address_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "run",
        "--config",
        demo().to_str().unwrap(),
        "--listen",
        "192.0.2.1:1",
        "--state-dir",
        dir.path().to_str().unwrap(),
        "--for-s",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn listen_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = bin()
        .args(["run", "--config", demo().to_str().unwrap(), "--for-s", "1"])
        .env("NBITMS_LISTEN", "127.0.0.1:0")
        .env("NBITMS_STATE_DIR", dir.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    assert!(line.starts_with("listening on http://127.0.0.1:"), "{line}");
    assert!(child.wait().unwrap().success());
    assert!(dir.path().join("state.jsonl").exists());
}
