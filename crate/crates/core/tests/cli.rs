use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::Value;

use trimarkov::markov::{parse_rational, Data};

fn trimarkov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trimarkov")).args(args).output().expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn rational_sum(entries: &Value) -> BigRational {
    entries
        .as_array()
        .unwrap()
        .iter()
        .map(|e| parse_rational(e["p"].as_str().unwrap()).unwrap())
        .fold(BigRational::zero(), |a, b| a + b)
}

#[test]
fn model_output_is_exact_and_conserved() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = trimarkov(&["model", "--model", "m1-model2", "--level", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert_eq!(v["mode"], "exact");
    assert!(rational_sum(&v["cycle_marginal"]).is_one());
    let data = Data::from_json(&v["data"]).unwrap();
    assert!(data.total().is_one());
    assert_eq!(data.level(), 2);
}

#[test]
fn model_picked_from_polynomial() {
    let o = trimarkov(&["model", "--poly", "m1a", "--t", "3", "--level", "1"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["model"], "m1-model4");
}

#[test]
fn simulation_is_reproducible() {
    let args = ["model", "--model", "1:4", "--level", "5", "--simulate", "--samples", "20000", "--seed", "9"];
    let a = trimarkov(&args);
    let b = trimarkov(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn support_cap_suggests_simulation() {
    let o = trimarkov(&["model", "--model", "m1-model4", "--level", "4", "--max-support", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--simulate"));
}

#[test]
fn factor_sweeps_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let rec = dir.path().join(format!("{name}.jsonl"));
        let o = trimarkov(&[
            "factor", "--poly", "m1a", "--t", "3", "--level", "2", "--prime-bound", "3000",
            "--records", rec.to_str().unwrap(), "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        (fs::read(out).unwrap(), fs::read(rec).unwrap())
    };
    let (a, ra) = run("a.json");
    let (b, rb) = run("b.json");
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let first: Value = serde_json::from_str(String::from_utf8(ra).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["p"], 7);
}

#[test]
fn tiny_bound_reports_skips() {
    let o = trimarkov(&["factor", "--poly", "m1a", "--t", "3", "--prime-bound", "10", "--all-primes"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let sw = &v["sweep"];
    let skipped: u64 = sw["skipped"].as_object().unwrap().values().map(|k| k.as_u64().unwrap()).sum();
    assert_eq!(sw["primes_used"].as_u64().unwrap() + skipped, 2); // 5 and 7
}

#[test]
fn compare_model_four_level_two() {
    let o = trimarkov(&["compare", "--poly", "m1a", "--t", "3", "--level", "2", "--prime-bound", "5000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["model_group_exact_equal"], true);
    assert_eq!(v["tv_model_group"].as_f64().unwrap(), 0.0);
    assert_eq!(v["containment_pass"], true);
}

#[test]
fn group_report_levels() {
    let o = trimarkov(&["group", "--orbit-length", "1", "--level", "2"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let items = v["items"].as_array().unwrap();
    assert!(items.iter().all(|i| i["verdict"] == "pass" || i["verdict"] == "info"));
    assert!(items.iter().filter(|i| i["claim"].as_str().unwrap().starts_with('A')).all(|i| i["method"]["kind"] == "exact"));

    let o = trimarkov(&["group", "--level", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn hausdorff_table_csv() {
    let o = trimarkov(&["hausdorff", "--max-level", "3", "--format", "csv"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let row1: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row1[0], "1");
    assert_eq!(row1[1].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(trimarkov(&["model", "--model", "m1-model9"]).status.code(), Some(2));
    assert_eq!(trimarkov(&["factor", "--poly", "nope"]).status.code(), Some(2));
    assert_eq!(trimarkov(&["model", "--model", "m1-model1", "--level", "0"]).status.code(), Some(2));
}
