//! Exit codes and run-directory round trips of the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
analyses = ["tail"]

[background]
mass = 1.0

[grid]
rstar_min = -120.0
rstar_max = 120.0
h = 0.2
t_max = 100.0

[[data]]
center = 10.0
width = 1.0
velocity = "outgoing"

[observers]
radii = [10.0]

[tail]
window = [60.0, 100.0]

[output]
directory = "runs"
stride = 5
"#;

fn pricelaw(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pricelaw"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env("PRICELAW_WORKERS", w),
        None => cmd.env_remove("PRICELAW_WORKERS"),
    };
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_dir(out: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8_lossy(&out.stdout).lines().next().unwrap().trim())
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&pricelaw(&["run", tmp.path().join("missing.toml").to_str().unwrap()], None)), 2);
    let unknown = write_config(tmp.path(), "unknown.toml", &SMALL.replace("h = 0.2", "h = 0.2\nspacing = 3"));
    let out = pricelaw(&["run", &unknown], None);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("spacing"));
    assert_eq!(code(&pricelaw(&["frobnicate"], None)), 2);
}

#[test]
fn numerical_failures_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cfl.toml", &SMALL.replace("h = 0.2", "h = 0.2\ncfl = 1.5"));
    let out = pricelaw(&["run", &cfg, "--output", tmp.path().to_str().unwrap()], None);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn selftest_passes() {
    let out = pricelaw(&["selftest"], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn run_then_report_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = pricelaw(&["run", &cfg, "--output", tmp.path().to_str().unwrap()], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    for f in ["manifest.json", "config.json", "trajectory.csv", "tail.json", "tail.svg"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    assert_eq!(code(&pricelaw(&["report", dir.to_str().unwrap()], None)), 0);
    let csv = dir.join("trajectory.csv");
    let mut text = fs::read_to_string(&csv).unwrap();
    text.push_str("0,0,0,0,0\n");
    fs::write(&csv, text).unwrap();
    let report = pricelaw(&["report", dir.to_str().unwrap()], None);
    assert_eq!(code(&report), 4);
    assert!(String::from_utf8_lossy(&report.stdout).contains("MISMATCH trajectory.csv"));
}

#[test]
fn failed_checks_exit_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("window = [60.0, 100.0]", "window = [60.0, 100.0]\nexpected = -7.0\ntolerance = 0.1");
    let cfg = write_config(tmp.path(), "check.toml", &text);
    let out = pricelaw(&["run", &cfg, "--output", tmp.path().to_str().unwrap()], None);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn sweep_respects_worker_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[sweep]\nh = [0.4, 0.2]\n");
    let cfg = write_config(tmp.path(), "sweep.toml", &text);
    let root = tmp.path().to_str().unwrap();
    assert_eq!(code(&pricelaw(&["sweep", &cfg, "--output", root], Some("0"))), 2);
    assert_eq!(code(&pricelaw(&["sweep", &cfg, "--output", root], Some("many"))), 2);
    let out = pricelaw(&["sweep", &cfg, "--output", root], Some("2"));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("(2 workers)"));
    let dir = run_dir(&out);
    let dir = PathBuf::from(dir.to_str().unwrap().split(" (").next().unwrap());
    assert!(dir.join("sweep.json").is_file() && dir.join("convergence.csv").is_file());
}
