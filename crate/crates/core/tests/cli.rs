use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcl")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{"n": 4, "f": 1, "pi": {"crash_prob": 0.1}, "trials": 200, "seed": 3}"#;

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(rcl(&["--help"]).status.code(), Some(0));
    assert_eq!(rcl(&["--version"]).status.code(), Some(0));
    assert_eq!(rcl(&["mc", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_and_config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rcl(&[]).status.code(), Some(1));
    assert_eq!(rcl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(rcl(&["mc", "--config", "/nonexistent/cfg.json"]).status.code(), Some(1));

    let bad_field = write_config(dir.path(), r#"{"n": 4, "f": 1, "pi": {"crash_prob": 0.1}, "trials": 10, "colour": 1}"#);
    assert_eq!(rcl(&["mc", "--config", &bad_field]).status.code(), Some(1));

    let f_too_big = write_config(dir.path(), r#"{"n": 3, "f": 2, "pi": {"crash_prob": 0.1}, "trials": 10}"#);
    let out = rcl(&["mc", "--config", &f_too_big]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let ok = write_config(dir.path(), SMALL);
    assert_eq!(rcl(&["deviate", "--config", &ok]).status.code(), Some(1), "deviate needs a deviation");
    assert_eq!(rcl(&["deviate", "--config", &ok, "--deviation", "{\"deviator\": 9}"]).status.code(), Some(1));
}

#[test]
fn successful_subcommands_exit_zero_and_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("report.json");
    let out_s = out.to_str().unwrap();
    let noop = r#"{"deviator": 1, "kind": {"type": "no_op"}}"#;
    for args in [
        vec!["run", "--config", &cfg, "--out", out_s],
        vec!["mc", "--config", &cfg, "--out", out_s],
        vec!["fairness", "--config", &cfg, "--out", out_s],
        vec!["deviate", "--config", &cfg, "--deviation", noop, "--out", out_s],
        vec!["exhibit", "--config", &cfg, "--trials", "1", "--out", out_s],
    ] {
        let res = rcl(&args);
        assert_eq!(res.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
        let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert!(report.is_object(), "{args:?}");
        fs::remove_file(&out).unwrap();
    }
}

#[test]
fn run_writes_a_json_lines_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let trace = dir.path().join("trace.jsonl");
    let res = rcl(&["run", "--config", &cfg, "--trial", "5", "--trace", trace.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let text = fs::read_to_string(&trace).unwrap();
    for line in text.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    assert!(text.lines().count() >= 3);
}
