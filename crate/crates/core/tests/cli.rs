use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_sigma-lab");

const SMALL: &[&str] = &["--grid.dt=0.001", "--grid.n_steps=1000", "--ensemble.n_paths=200"];

fn run(args: &[&str], threads: usize) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

fn run_suite(suite: &str, out: &Path, extra: &[&str], threads: usize) -> Output {
    let mut args = vec!["run", suite, "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    run(&args, threads)
}

fn payload(dir: &Path) -> Value {
    let mut v: Value = serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_ms");
    v
}

#[test]
fn version_and_describe() {
    let o = run(&["version"], 1);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
    let o = run(&["describe", "estimates"], 1);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("estimate.exceedance"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run_suite("sigma-verify", &out, &["--grid.bogus=1"], 1);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.bogus"));

    let o = run_suite("sigma-verify", &out, &["--grid.dt=-1"], 1);
    assert_eq!(o.status.code(), Some(2));

    let o = run_suite("no-such-suite", &out, &[], 1);
    assert_eq!(o.status.code(), Some(2));

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{ not json").unwrap();
    let o = run(&["run", "--config", cfg.to_str().unwrap()], 1);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["run", "--config", dir.path().join("missing.json").to_str().unwrap()], 1);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn failed_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_suite("sigma-verify", dir.path(), &["--tolerances.carried_ratio=0.0", "--process.family=reflected"], 1);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let report = payload(dir.path());
    assert_eq!(report["pass"], Value::Bool(false));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL sigma.class_membership"));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("file");
    fs::write(&file, "").unwrap();
    let o = run_suite("sigma-verify", &file.join("sub"), &[], 1);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"suite":"sigma-verify","grid":{"dt":0.001,"n_steps":1000},"ensemble":{"n_paths":500},"process":{"family":"brownian"}}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = run(
        &["run", "--config", cfg.to_str().unwrap(), "--ensemble.n_paths=200", "--out", out.to_str().unwrap()],
        1,
    );
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
    let report = payload(&out);
    assert_eq!(report["config"]["ensemble"]["n_paths"], Value::from(200));
    assert_eq!(report["config"]["process"]["family"], Value::from("brownian"));
}

#[test]
fn outputs_are_written_and_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = run_suite("sigma-verify", &a, &[], 1);
    let ob = run_suite("sigma-verify", &b, &[], 4);
    assert_eq!(oa.status.code(), ob.status.code());
    assert!(matches!(oa.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&oa.stderr));

    let ha = fs::read_to_string(a.join("hash.txt")).unwrap();
    assert_eq!(ha.trim().len(), 64);
    assert_eq!(ha, fs::read_to_string(b.join("hash.txt")).unwrap());
    assert_eq!(payload(&a), payload(&b));

    let report = payload(&a);
    for check in report["checks"].as_array().unwrap() {
        for art in check["artifacts"].as_array().unwrap() {
            let name = art.as_str().unwrap();
            let csv = fs::read_to_string(a.join(name)).unwrap();
            assert!(csv.starts_with("t,") || csv.starts_with("g_index,"), "{name}");
            assert_eq!(csv, fs::read_to_string(b.join(name)).unwrap());
        }
    }
    let names: Vec<&str> = report["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
}
