//! Command-line behaviour: exit codes, outputs and thread-count independence.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ccrr"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("run ccrr")
}

fn code(args: &[&str]) -> i32 {
    run(args, &[]).status.code().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn path(root: &Path, name: &str) -> String {
    root.join(name).to_str().unwrap().to_string()
}

fn small_twogroup(root: &Path, name: &str, extra: &[&str]) -> String {
    let out = path(root, name);
    let mut args = vec!["simulate", "--scenario", "twogroup", "--seed", "3", "--set", "group_sizes=[6,6]"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", &out]);
    ok(&args);
    out
}

#[test]
fn help_exits_zero_everywhere() {
    for args in [
        vec!["--help"],
        vec!["simulate", "--help"],
        vec!["fit", "--help"],
        vec!["embed", "--help"],
        vec!["test", "--help"],
        vec!["test", "global", "--help"],
        vec!["test", "local", "--help"],
        vec!["reproduce", "--help"],
    ] {
        let out = run(&args, &[]);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{args:?}");
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "x");
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["simulate", "--scenario", "nope", "--out", &out]), 2);
    assert_eq!(code(&["simulate", "--scenario", "rank1", "--set", "bogus=1", "--out", &out]), 2);
    assert_eq!(code(&["simulate", "--scenario", "rank1", "--config", "/no/such/file.json", "--out", &out]), 2);
    assert_eq!(code(&["fit", "--data", "/no/such/dir", "--K", "2", "--out", &out]), 2);
    assert_eq!(code(&["reproduce", "sim61", "--scale", "huge", "--out", &out]), 2);
    let bad_threads = run(&["simulate", "--scenario", "rank1", "--out", &out], &[("CCRR_THREADS", "zero")]);
    assert_eq!(bad_threads.status.code(), Some(2));

    let data = small_twogroup(dir.path(), "data", &[]);
    assert_eq!(code(&["fit", "--data", &data, "--K", "0", "--out", &out]), 2);
    assert_eq!(code(&["fit", "--data", &data, "--K", "10000", "--out", &out]), 2);
    assert_eq!(code(&["fit", "--data", &data, "--K", "2", "--sparsity", "some", "--out", &out]), 2);
}

#[test]
fn grid_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_twogroup(dir.path(), "data", &[]);
    let other = small_twogroup(dir.path(), "other", &["--set", "grid_subdivision=1"]);
    let model = path(dir.path(), "model");
    ok(&["fit", "--data", &data, "--K", "2", "--out", &model]);
    let out = path(dir.path(), "e");
    let res = run(&["embed", "--model", &model, "--data", &other, "--out", &out], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&res.stderr).is_empty());
    assert_eq!(code(&["test", "local", "--model", &model, "--data", &other, "--permutations", "99", "--out", &out]), 2);
}

#[test]
fn group_tests_need_labels() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "data");
    ok(&["simulate", "--scenario", "rank1", "--seed", "1", "--set", "n=8", "--out", &data]);
    let model = path(dir.path(), "model");
    ok(&["fit", "--data", &data, "--K", "2", "--out", &model]);
    let out = path(dir.path(), "t");
    assert_eq!(code(&["test", "global", "--model", &model, "--data", &data, "--permutations", "99", "--out", &out]), 2);
}

#[test]
fn fit_writes_diagnostics_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_twogroup(dir.path(), "data", &[]);
    let model = path(dir.path(), "model");
    ok(&["fit", "--data", &data, "--K", "3", "--sparsity", "auto", "--out", &model]);
    let diag = fs::read_to_string(Path::new(&model).join("diagnostics.csv")).unwrap();
    let mut lines = diag.lines();
    assert_eq!(
        lines.next().unwrap(),
        "component,iterations,converged,threshold,support,residual_norm_sq"
    );
    assert_eq!(lines.count(), 3);

    let local = path(dir.path(), "local");
    ok(&["test", "local", "--model", &model, "--data", &data, "--permutations", "99", "--out", &local]);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(Path::new(&local).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["adjusted"].as_array().unwrap().len(), 3);
    assert!(Path::new(&local).join("cover.csv").exists());

    let global = path(dir.path(), "global");
    ok(&["test", "global", "--model", &model, "--data", &data, "--permutations", "99", "--out", &global]);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(Path::new(&global).join("report.json")).unwrap()).unwrap();
    let p = report["p_value"].as_f64().unwrap();
    assert!((0.01..=1.0).contains(&p));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_twogroup(dir.path(), "data", &[]);
    let model = path(dir.path(), "model");
    ok(&["fit", "--data", &data, "--K", "3", "--out", &model]);
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let out = path(dir.path(), &format!("local{threads}"));
        let res = run(
            &["test", "local", "--model", &model, "--data", &data, "--permutations", "199", "--seed", "4", "--out", &out],
            &[("CCRR_THREADS", threads)],
        );
        assert!(res.status.success());
        reports.push(fs::read(Path::new(&out).join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn sim61_writes_the_error_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "sim61");
    ok(&[
        "reproduce", "sim61", "--seed", "2", "--set", "sample_sizes=[10]", "--set", "k_max=3", "--set", "replicates=2",
        "--out", &out,
    ]);
    let table = fs::read_to_string(Path::new(&out).join("error_curves.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "K,N,train_mse,test_mse");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!((r[0], r[1]), ((i + 1) as f64, 10.0));
        assert!(r[2] >= 0.0 && r[3] >= 0.0);
    }
    assert!(rows.windows(2).all(|w| w[1][2] <= w[0][2]));
    assert!(Path::new(&out).join("error_curves.svg").exists());
    assert!(Path::new(&out).join("settings.json").exists());
}
