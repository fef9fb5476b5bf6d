//! End-to-end checks of the `quantify` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quantify_core::data::{load_csv, Schema};
use quantify_core::rkhs::RkhsSelection;
use quantify_core::simulate::{generate, ScenarioSpec};
use serde_json::Value;

fn quantify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quantify"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

// class 0: {0.1, 0.3}; class 1: {0.7, 0.9}; unlabeled {0.2, 0.8, 0.8, 0.6}
const SMALL: &str = "h,y,s\n0.1,0,1\n0.3,0,1\n0.7,1,1\n0.9,1,1\n0.2,,0\n0.8,,0\n0.8,,0\n0.6,,0\n";

#[test]
fn estimate_ratio_and_cc_on_small_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", SMALL);
    let ratio = json(&quantify(&["estimate", "--input", &input, "--score-columns", "h"]));
    assert!((ratio["theta"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(ratio["method"], "ratio");

    let cc = json(&quantify(&["estimate", "--input", &input, "--score-columns", "h", "--method", "cc", "--threshold", "0.5"]));
    assert!((cc["theta"].as_f64().unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn estimate_ci_is_reported_unclipped_with_clipped_copy() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", SMALL);
    let out = json(&quantify(&["estimate", "--input", &input, "--ci", "0.95", "--regime", "dense"]));
    let (lo, hi) = (out["ci"]["lo"].as_f64().unwrap(), out["ci"]["hi"].as_f64().unwrap());
    assert!(lo < out["theta_raw"].as_f64().unwrap() && out["theta_raw"].as_f64().unwrap() < hi);
    let clipped_hi = out["ci_clipped"]["hi"].as_f64().unwrap();
    assert_eq!(clipped_hi, hi.min(1.0));
}

#[test]
fn missing_score_column_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", SMALL);
    let out = quantify(&["estimate", "--input", &input, "--score-columns", "g"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`g`"));
}

#[test]
fn missing_input_file_is_an_input_error() {
    let out = quantify(&["estimate", "--input", "/nonexistent/quantify.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn csv_output_flattens_fields() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", SMALL);
    let out = quantify(&["--output", "csv", "estimate", "--input", &input, "--method", "cc"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.contains("theta") && header.contains("method"));
    assert_eq!(text.lines().count(), 2);
}

/// Unlabeled rows copied from class 1 look like a theta = 1 mixture.
fn class_one_copy(dir: &Path) -> String {
    let mut text = String::from("h,y,s\n");
    for i in 0..40 {
        let v = i as f64 / 40.0;
        text += &format!("{v},0,1\n{},1,1\n{},,0\n", v + 0.5, v + 0.5);
    }
    write(dir, "copy.csv", &text)
}

#[test]
fn shift_test_accepts_a_copy_of_class_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = class_one_copy(dir.path());
    let out = json(&quantify(&["test-shift", "--input", &input, "--B", "50", "--seed", "3"]));
    assert_eq!(out["p_value"].as_f64().unwrap(), 1.0);
    assert_eq!(out["replicates"].as_u64().unwrap(), 50);
}

#[test]
fn shift_test_is_reproducible_and_single_replicate_is_binary() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", SMALL);
    let a = quantify(&["test-shift", "--input", &input, "--B", "30", "--seed", "9"]);
    let b = quantify(&["test-shift", "--input", &input, "--B", "30", "--seed", "9"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let one = json(&quantify(&["test-shift", "--input", &input, "--B", "1"]));
    let p = one["p_value"].as_f64().unwrap();
    assert!(p == 0.0 || p == 1.0);
}

fn gaussian_fixture(dir: &Path) -> String {
    let spec = ScenarioSpec::default_for("gaussian").unwrap().with_gamma(-1.0).unwrap();
    let data = generate(&spec, 21).unwrap();
    let mut text = String::from("x,y,s\n");
    for i in 0..data.len() {
        let labeled = data.is_labeled(i);
        let y = if labeled { data.labels()[i].unwrap().to_string() } else { String::new() };
        text += &format!("{},{y},{}\n", data.row(i)[0], u8::from(labeled));
    }
    write(dir, "gauss.csv", &text)
}

#[test]
fn select_g_round_trips_weights() {
    let dir = tempfile::tempdir().unwrap();
    let input = gaussian_fixture(dir.path());
    let weights = dir.path().join("g.json");
    let out = json(&quantify(&[
        "select-g",
        "--input",
        &input,
        "--kernel",
        "gaussian",
        "--gamma-grid",
        "0.01",
        "--seed",
        "4",
        "--out",
        weights.to_str().unwrap(),
    ]));
    assert_eq!(out["gamma"].as_f64().unwrap(), 0.01);

    let selection: RkhsSelection = serde_json::from_str(&std::fs::read_to_string(&weights).unwrap()).unwrap();
    let data = load_csv(&input, &Schema::default()).unwrap();
    let again = selection.heldout_objective(&data).unwrap();
    assert!((again - selection.objective).abs() < 1e-9);

    // the saved score function plugs back into estimate
    let est = json(&quantify(&["estimate", "--input", &input, "--g-json", weights.to_str().unwrap()]));
    let theta = est["theta"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&theta));
}

#[test]
fn select_g_rejects_unknown_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let input = gaussian_fixture(dir.path());
    let out = quantify(&["select-g", "--input", &input, "--kernel", "polynomial"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_one_record_per_replicate() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir: PathBuf = dir.path().join("run");
    let out = quantify(&[
        "simulate",
        "--study",
        "mse",
        "--thetas",
        "0.2,0.4",
        "--methods",
        "cc,ratio",
        "--replicates",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = std::fs::read_to_string(out_dir.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 2 * 2 * 2);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"].as_array().unwrap().len(), 4);
}

#[test]
fn presets_resolve_to_named_sizes() {
    let out = json(&quantify(&["simulate", "--preset", "candles", "--print-spec"]));
    assert_eq!(out["n_unlabeled"], 300);
    assert_eq!(out["n0"], 150);
    assert_eq!(out["n1"], 150);
    let bank = json(&quantify(&["simulate", "--preset", "bank", "--print-spec"]));
    assert_eq!(bank["n_unlabeled"], 10000);
}

#[test]
fn unknown_study_is_a_usage_error() {
    let out = quantify(&["simulate", "--study", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

fn curve(out: &Output) -> Vec<(f64, f64)> {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .skip(1)
        .map(|line| {
            let (z, t) = line.split_once(',').unwrap();
            (z.parse().unwrap(), t.parse().unwrap())
        })
        .collect()
}

#[test]
fn regress_with_constant_score_is_flat_and_echoes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("g,z,y,s\n");
    for i in 0..20 {
        let z = i as f64 / 20.0;
        text += &format!("0,{z},0,1\n1,{z},1,1\n1,{z},,0\n");
    }
    let input = write(dir.path(), "r.csv", &text);
    let out = quantify(&["regress", "--input", &input, "--score-columns", "g", "--grid", "0.05,0.3,0.95"]);
    let points = curve(&out);
    assert_eq!(points.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0.05, 0.3, 0.95]);
    assert!(points.iter().all(|p| p.1 == 1.0));

    let unsorted = quantify(&["regress", "--input", &input, "--score-columns", "g", "--grid", "0.9,0.1"]);
    assert_eq!(unsorted.status.code(), Some(2));
}

#[test]
fn regress_ratio_and_cc_agree_for_separated_classes() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(&ScenarioSpec::default_for("regression_sine").unwrap(), 8).unwrap();
    let z = data.covariate().unwrap();
    let mut text = String::from("x,g,z,y,s\n");
    for (i, zi) in z.iter().enumerate() {
        let r = data.row(i);
        let labeled = data.is_labeled(i);
        let y = if labeled { data.labels()[i].unwrap().to_string() } else { String::new() };
        text += &format!("{},{},{},{y},{}\n", r[0], r[1], zi.unwrap(), u8::from(labeled));
    }
    let input = write(dir.path(), "sine.csv", &text);
    let ratio = curve(&quantify(&["regress", "--input", &input, "--score-columns", "g"]));
    let cc = curve(&quantify(&["regress", "--input", &input, "--score-columns", "g", "--method", "cc"]));
    assert_eq!(ratio.len(), 100);
    let gap = ratio.iter().zip(&cc).map(|(a, b)| (a.1 - b.1).abs()).fold(0.0, f64::max);
    assert!(gap < 0.1, "sup gap {gap}");
}

#[test]
fn bad_bandwidth_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", "h,z,y,s\n0,0,0,1\n1,1,1,1\n1,0.5,,0\n");
    let out = quantify(&["regress", "--input", &input, "--score-columns", "h", "--bandwidth", "-1"]);
    assert!(!out.status.success());
}
