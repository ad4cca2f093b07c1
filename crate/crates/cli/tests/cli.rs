use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mesh() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/henry_fracture.mesh")
}

fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"seed = 11
out = "out"

[mesh]
path = "{}"
max_level = 2

[physics]
t_end = 128.0

[screen]
levels = 2
samples = 2

[mlmc]
target = "x1"
time = 128.0
tol = [0.3]

[solve]
level = 0
vtk_times = [64.0]

[[qoi]]
id = "x1"
kind = "point"
at = [1.1, -0.8]
times = [64.0, 128.0]

[[qoi]]
id = "I2"
kind = "box"
at = [1.2, -0.8]
times = [128.0]
{extra}"#,
        mesh().display()
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn brine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brine-mlmc")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solve_is_repeatable_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    ok(&brine(&["solve", "--config", cfg]));
    let first = fs::read(dir.path().join("out/solve/series.csv")).unwrap();
    ok(&brine(&["solve", "--config", cfg]));
    assert_eq!(first, fs::read(dir.path().join("out/solve/series.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 4, "{text}");
    assert!(dir.path().join("out/solve/state_t64.vtk").is_file());
    assert!(dir.path().join("out/solve/state_t128.vtk").is_file());
    let summary = fs::read_to_string(dir.path().join("out/solve/summary.csv")).unwrap();
    let values: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let c_min: f64 = values[9].parse().unwrap();
    let c_max: f64 = values[10].parse().unwrap();
    assert!(c_min >= -1e-6 && c_max <= 1.0 + 1e-6);
}

#[test]
fn xi_override_changes_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    ok(&brine(&["solve", "--config", cfg]));
    let base = fs::read(dir.path().join("out/solve/series.csv")).unwrap();
    ok(&brine(&["solve", "--config", cfg, "--xi", "0.5,-1,1"]));
    assert_ne!(base, fs::read(dir.path().join("out/solve/series.csv")).unwrap());
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let text = fs::read_to_string(&cfg).unwrap().replace("henry_fracture.mesh", "missing.mesh");
    fs::write(&cfg, text).unwrap();
    let out = brine(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.mesh"));

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(brine(&["report", "--out", empty.path().to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(brine(&["screen"]).status.code(), Some(2));
    assert_eq!(brine(&["frobnicate"]).status.code(), Some(2));

    let cfg = tiny_config(dir.path(), "");
    assert_eq!(brine(&["mlmc", "--config", cfg.to_str().unwrap(), "--tol", "-1"]).status.code(), Some(2));
    let cfg = tiny_config(dir.path(), "\n[banana]\nx = 1\n");
    assert_eq!(brine(&["solve", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

fn without_wall_time(log: &str) -> Vec<String> {
    log.lines()
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != 10).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect()
}

#[test]
fn interrupted_screening_resumes_to_the_same_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    ok(&brine(&["screen", "--config", cfg]));
    let out = dir.path().join("out");
    let levels = fs::read(out.join("screen/levels.csv")).unwrap();
    let rates = fs::read(out.join("screen/rates.csv")).unwrap();
    let log = fs::read_to_string(out.join("results.csv")).unwrap();

    // Keep the first three samples, as if the run had been killed: two on
    // level 0 with four rows each, one coupled level-1 sample with eight.
    let keep: Vec<&str> = log.lines().take(1 + 2 * 4 + 8).collect();
    fs::write(out.join("results.csv"), keep.join("\n") + "\n").unwrap();
    fs::remove_dir_all(out.join("screen")).unwrap();
    let resumed = brine(&["screen", "--config", cfg, "--resume"]);
    ok(&resumed);
    assert!(String::from_utf8_lossy(&resumed.stderr).contains("3 samples read"));
    assert_eq!(levels, fs::read(out.join("screen/levels.csv")).unwrap());
    assert_eq!(rates, fs::read(out.join("screen/rates.csv")).unwrap());
    assert_eq!(without_wall_time(&log), without_wall_time(&fs::read_to_string(out.join("results.csv")).unwrap()));
}

#[test]
fn estimators_and_report_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "\n[mc]\nlevel = 1\nsamples = 3\n");
    let cfg = cfg.to_str().unwrap();
    ok(&brine(&["mlmc", "--config", cfg, "--workers", "2"]));
    ok(&brine(&["mc", "--config", cfg]));
    let out = dir.path().join("out");
    let summary = fs::read_to_string(out.join("mlmc/summary.csv")).unwrap();
    assert!(summary.starts_with("tol,e0,finest,samples,"), "{summary}");
    assert_eq!(summary.lines().count(), 2);
    assert!(out.join("mlmc/tol_0.3/levels.csv").is_file());
    assert!(out.join("mlmc/tol_0.3/estimates.csv").is_file());
    let mc = fs::read_to_string(out.join("mc/summary.csv")).unwrap();
    assert!(mc.lines().nth(1).unwrap().starts_with("0.3,1,3,"), "{mc}");

    let report = brine(&["report", "--config", cfg]);
    ok(&report);
    let cost = fs::read_to_string(out.join("report/cost_vs_tol.csv")).unwrap();
    assert_eq!(cost.lines().count(), 2, "{cost}");
    let decay = fs::read_to_string(out.join("report/decay.csv")).unwrap();
    // Three levels for each of x1 at 64 s, x1 at 128 s, and I2.
    assert_eq!(decay.lines().count(), 1 + 9, "{decay}");
}
