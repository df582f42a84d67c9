use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rfpe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfpe")).args(args).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn writes_outputs_and_replays_from_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    let out = rfpe(&[
        "run", "--preset", "gamma", "--trials", "4", "--n-experiments", "25", "--seed", "99",
        "--out", first.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let trace = read(&first, "trace.csv");
    assert_eq!(trace.lines().count(), 1 + 4 * 25);
    assert_eq!(read(&first, "aggregate.csv").lines().count(), 1 + 25);
    assert_eq!(read(&first, "final.csv").lines().count(), 1 + 4);
    let manifest = read(&first, "manifest.toml");
    assert!(manifest.contains("seed = 99"), "{manifest}");

    let out = rfpe(&[
        "run", "--manifest", first.join("manifest.toml").to_str().unwrap(), "--seed", "1",
        "--out", second.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    for name in ["trace.csv", "aggregate.csv", "final.csv", "manifest.toml"] {
        assert_eq!(read(&first, name), read(&second, name), "{name} differs");
    }
}

#[test]
fn failing_check_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rfpe(&["run", "--trials", "3", "--n-experiments", "20", "--check", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL ")), "{stdout}");
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    for args in [
        vec!["run", "--t2", "-5", "--out", dir],
        vec!["run", "--gamma", "1.5", "--out", dir],
        vec!["run", "--kappa", "0", "--out", dir],
        vec!["run", "--preset", "nope", "--out", dir],
        vec!["run", "--eigenvalues", "40", "--delta", "0.5", "--out", dir],
        vec!["frobnicate"],
    ] {
        let out = rfpe(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
    let missing = tmp.path().join("missing.toml");
    assert_eq!(rfpe(&["run", "--manifest", missing.to_str().unwrap(), "--out", dir]).status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let out = rfpe(&["run", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--preset"));
}
