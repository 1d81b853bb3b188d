use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nmpc_core::io::Table;

fn nmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmpc")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn default_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml").display().to_string()
}

#[test]
fn alpha_with_unit_overshoot() {
    let out = nmpc(&["alpha", "--C", "1", "--mu", "1", "--T", "1", "--delta", "0.5"]);
    assert_eq!(stdout(&out).trim(), "0.632121");
}

#[test]
fn sweep_gives_constant_column() {
    let dir = tempfile::tempdir().unwrap();
    let file = path(dir.path(), "sweep.csv");
    let out = nmpc(&[
        "alpha", "--C", "1", "--mu", "1", "--T", "1", "--delta-sweep", "0.01:0.99:99", "-o", file.to_str().unwrap(),
    ]);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 100);
    let table = Table::load(&file).unwrap();
    let alpha = table.column("alpha").unwrap();
    assert_eq!(alpha.len(), 99);
    let exact = 1.0 - (-1.0f64).exp();
    assert!(alpha.iter().all(|a| (a - exact).abs() <= 1e-11), "{alpha:?}");
}

#[test]
fn control_horizon_beyond_prediction_horizon_fails() {
    let out = nmpc(&["alpha", "--C", "2", "--mu", "1", "--T", "1", "--delta", "1.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("control horizon"));
    let out = nmpc(&["alpha", "--C", "2", "--mu", "1", "--T", "1"]);
    assert!(!out.status.success());
}

#[test]
fn repeated_batches_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let file = path(dir.path(), name);
        let out = nmpc(&[
            "cstr", "--duration", "0.3", "--delta-random", "0.1:0.3", "--runs", "3", "--seed", "7", "-o",
            file.to_str().unwrap(),
        ]);
        (stdout(&out), std::fs::read(&file).unwrap())
    };
    let (a_out, a) = run("a.csv");
    let (b_out, b) = run("b.csv");
    assert_eq!(a, b);
    assert_eq!(a_out, b_out);
    let seq = path(dir.path(), "seq.csv");
    let out = nmpc(&[
        "--sequential", "cstr", "--duration", "0.3", "--delta-random", "0.1:0.3", "--runs", "3", "--seed", "7", "-o",
        seq.to_str().unwrap(),
    ]);
    stdout(&out);
    assert_eq!(std::fs::read(&seq).unwrap(), a);
}

#[test]
fn emitted_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let file = path(dir.path(), "region.csv");
    stdout(&nmpc(&["region", "--T", "1", "--delta", "0.1", "--grid", "15", "-o", file.to_str().unwrap()]));
    let text = std::fs::read_to_string(&file).unwrap();
    let table = Table::read_csv(text.as_bytes()).unwrap();
    assert_eq!(table.rows.len(), 225);
    assert_eq!(table.to_csv_string(), text);
}

#[test]
fn analyze_reproduces_run_index() {
    let dir = tempfile::tempdir().unwrap();
    let records = path(dir.path(), "records.csv");
    let report = path(dir.path(), "report.json");
    let run = stdout(&nmpc(&[
        "cstr", "--delta", "0.1", "--duration", "0.5", "--records", records.to_str().unwrap(), "-o",
        report.to_str().unwrap(), "--format", "json",
    ]));
    let alpha = run.split("global alpha ").nth(1).unwrap().split(',').next().unwrap().to_string();
    let analyzed = stdout(&nmpc(&["analyze", records.to_str().unwrap()]));
    assert!(analyzed.starts_with(&format!("global alpha {alpha},")), "{run} vs {analyzed}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["steps"].as_array().unwrap().len(), 5);
}

#[test]
fn networked_default_configuration_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let log = path(dir.path(), "events.jsonl");
    let out = stdout(&nmpc(&[
        "ncs", "--network", &default_config(), "--duration", "0.5", "--event-log", log.to_str().unwrap(),
    ]));
    assert!(out.contains("prediction consistency: pass"), "{out}");
    let events = std::fs::read_to_string(&log).unwrap();
    assert!(events.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn malformed_network_configuration_fails() {
    let dir = tempfile::tempdir().unwrap();
    let file = path(dir.path(), "bad.toml");
    std::fs::write(&file, "controller_sampling = 0.05\nunknown = 1\n").unwrap();
    let out = nmpc(&["ncs", "--network", file.to_str().unwrap()]);
    assert!(!out.status.success());
}
