use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bicmdp::io;
use bicmdp::occupancy::evaluate_direct;
use serde_json::Value;

fn bicmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bicmdp")).args(args).output().expect("binary runs")
}

fn model(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("models").join(name)
}

fn arg(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn validate_reports_dimensions() {
    let out = bicmdp(&["validate", arg(&model("two_state.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let summary = stdout_json(&out);
    assert_eq!(summary["valid"], true);
    assert_eq!(summary["num_states"], 2);
    assert_eq!(summary["horizon"], 3);
    assert_eq!(summary["num_constraints"], 1);
    assert_eq!(summary["survival_bits"], 1);
    assert_eq!(summary["augmented_states"], 4);
}

#[test]
fn invalid_model_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let mut cmdp = io::load_model(model("two_state.json")).unwrap();
    cmdp.kernel[0][1] = vec![0.7, 0.7];
    cmdp.components[0].bound = Some(1.0);
    let path = dir.path().join("bad.json");
    io::save_model(&cmdp, &path).unwrap();

    let out = bicmdp(&["validate", arg(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let failure = stderr_json(&out);
    assert_eq!(failure["error"], "invalid-model");
    assert!(failure["violations"].as_array().unwrap().len() >= 2, "{failure}");
}

#[test]
fn malformed_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.json");
    std::fs::write(&path, "{\"num_states\": ").unwrap();
    let out = bicmdp(&["validate", arg(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "parse");

    let out = bicmdp(&["validate", arg(&dir.path().join("absent.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "io");
}

#[test]
fn evaluate_columns_agree() {
    let out = bicmdp(&["evaluate", arg(&model("two_state.json")), arg(&model("two_state_policy.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let rows = stdout_json(&out);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let (d, a) = (row["direct"].as_f64().unwrap(), row["augmented"].as_f64().unwrap());
        assert!((d - a).abs() <= 1e-10, "{row}");
    }
}

#[test]
fn policy_of_the_wrong_shape_is_rejected() {
    let out = bicmdp(&["evaluate", arg(&model("epidemic.json")), arg(&model("two_state_policy.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_is_reproducible_and_reports_exact_values() {
    let path = model("two_state.json");
    let args = ["solve", arg(&path), "--max-iters", "300", "--seed", "5", "--restart-weight", "300"];
    let first = bicmdp(&args);
    let second = bicmdp(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));

    let (mut a, mut b) = (stdout_json(&first), stdout_json(&second));
    a.as_object_mut().unwrap().remove("wall_time_ms");
    b.as_object_mut().unwrap().remove("wall_time_ms");
    assert_eq!(a, b);

    let cmdp = io::load_model(&path).unwrap();
    let policy = io::parse_policy(&serde_json::to_string(&a["policy"]).unwrap()).unwrap();
    let value = a["value"].as_f64().unwrap();
    assert!((value - evaluate_direct(&cmdp, &policy, 0)).abs() <= 1e-10);
    let constraint = &a["constraints"][0];
    assert!(constraint["value"].as_f64().unwrap() <= constraint["bound"].as_f64().unwrap() + 1e-9);
    assert!(a["c2_residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn solve_writes_report_and_log_files() {
    let dir = tempfile::tempdir().unwrap();
    let (report, log) = (dir.path().join("report.json"), dir.path().join("log.csv"));
    let out = bicmdp(&[
        "solve",
        arg(&model("two_state.json")),
        "--max-iters",
        "40",
        "--log-csv",
        arg(&log),
        "--out",
        arg(&report),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(report["iterations"], 40);
    let lines = std::fs::read_to_string(log).unwrap();
    assert_eq!(lines.lines().count(), 41);
}

#[test]
fn generated_epidemic_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("epi.json");
    let out = bicmdp(&["gen-epidemic", "--population", "3", "--horizon", "3", "--alpha", "-1.5", "--out", arg(&path)]);
    assert_eq!(out.status.code(), Some(0));

    let summary = stdout_json(&bicmdp(&["validate", arg(&path)]));
    assert_eq!(summary["num_states"], 4);
    assert_eq!(summary["num_actions"], 3);

    let out = bicmdp(&["solve", arg(&path), "--max-iters", "200", "--restart-weight", "200"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_json(&out)["value"].as_f64().unwrap().is_finite());
}

#[test]
fn oversized_epidemic_hits_the_size_cap() {
    let out = bicmdp(&["gen-epidemic", "--population", "5000"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"], "size-limit");
}

#[test]
fn infeasible_bound_has_no_feasible_policy() {
    let dir = tempfile::tempdir().unwrap();
    let mut cmdp = io::load_model(model("two_state.json")).unwrap();
    cmdp.components[1].bound = Some(-1.0);
    let path = dir.path().join("tight.json");
    io::save_model(&cmdp, &path).unwrap();

    let out = bicmdp(&["oracle", arg(&path), "--mode", "det"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout_json(&out)["best_value"].is_null());

    let out = bicmdp(&["solve", arg(&path), "--max-iters", "50"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "no-feasible-point");
}

#[test]
fn oracle_bounds_the_solver() {
    let path = model("two_state.json");
    let grid = stdout_json(&bicmdp(&["oracle", arg(&path), "--step", "0.25"]));
    let det = stdout_json(&bicmdp(&["oracle", arg(&path), "--mode", "det"]));
    let (grid, det) = (grid["best_value"].as_f64().unwrap(), det["best_value"].as_f64().unwrap());
    assert!(grid <= det + 1e-12);

    let solved = stdout_json(&bicmdp(&["solve", arg(&path), "--max-iters", "2000", "--restart-weight", "2000"]));
    assert!(solved["value"].as_f64().unwrap() <= grid + 1e-9);
}
