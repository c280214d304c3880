use std::fs;
use std::process::{Command, Output};

fn dyembed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyembed"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn gen_is_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("instance.json");
    let path = path.to_str().unwrap();
    let first = dyembed(&["gen", "--seed", "1", "--depth", "2", "--n", "3", "--exponents", "wolff"]);
    assert!(first.status.success());
    let second = dyembed(&["gen", "--seed", "1", "--depth", "2", "--n", "3", "--exponents", "wolff", "--out", path]);
    assert!(second.status.success());
    assert_eq!(first.stdout, fs::read(path).unwrap());

    let eval = dyembed(&["eval", path]);
    assert!(eval.status.success());
    let value: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert!(value["value"].as_f64().unwrap() > 0.0);
    assert_eq!(value["norms"].as_array().unwrap().len(), 3);

    let constants = dyembed(&["constants", path, "--restarts", "2"]);
    assert!(constants.status.success());
    let report: serde_json::Value = serde_json::from_slice(&constants.stdout).unwrap();
    assert_eq!(report["c2_kind"], "wolff");
    assert_eq!(report["wolff"]["per_phi"].as_array().unwrap().len(), 6);
}

#[test]
fn sweep_output_is_byte_identical() {
    let args = ["sweep", "--seed", "9", "--count", "4", "--depth", "2", "--format", "csv"];
    let first = dyembed(&args);
    let second = dyembed(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.starts_with("instance_id,regime,c1,c2_kind,c2,ratio,worst_j_or_phi,seconds\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn verification_suites_exit_zero() {
    assert_eq!(dyembed(&["check-lemma", "--count", "200"]).status.code(), Some(0));
    let corona = dyembed(&["check-corona", "--n", "3", "--depth", "4", "--count", "100"]);
    assert_eq!(corona.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&corona.stdout).unwrap();
    assert_eq!(summary["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["sweep", "--count", "0"][..],
        &["gen", "--family", "lognormal"],
        &["gen", "--exponents", "2,x"],
        &["gen", "--exponents", "2,3", "--n", "3"],
        &["eval", "/nonexistent/instance.json"],
        &["frobnicate"],
        &["sweep", "--format", "xml"],
    ] {
        let output = dyembed(args);
        assert_eq!(output.status.code(), Some(2), "{args:?}");
        assert!(!output.stderr.is_empty());
    }
}

#[test]
fn malformed_instance_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, br#"{"branching": 2, "depth": 1, "exponents": [1.0], "measures": [[1, 1]], "kernel": {}}"#).unwrap();
    let output = dyembed(&["constants", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("exponent"));
}
