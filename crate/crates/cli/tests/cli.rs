use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hyperspread"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn hyperspread")
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn scalar(beta3: f64, initial: &str) -> String {
    format!(
        r#"{{
  "schema": 1,
  "nodes": {{"n": 1, "m": 0}},
  "hypergraph": {{"self_loops": true, "edges": {{"2": [[0, [0], 1.0, 1]], "3": [[0, [0, 0], 1.0, 2]]}}}},
  "viruses": [{{"rates": {{"delta": [1.0], "delta_w": [], "beta_pair": [0.5], "beta_higher": {{"3": [{beta3}]}}}}}}],
  "initial": {initial}
}}"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

/// Roots of `β₃x² + (β − β₃)x + (δ − β) = 0`, the positive equilibria of the scalar model.
fn scalar_roots(delta: f64, beta: f64, beta3: f64) -> (f64, f64) {
    let (a, b, c) = (beta3, beta - beta3, delta - beta);
    let disc = (b * b - 4.0 * a * c).sqrt();
    ((-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a))
}

#[test]
fn equilibria_on_bistable_scalar() {
    let dir = TempDir::new().unwrap();
    let sc = write(dir.path(), "s.json", &scalar(4.0, r#"{"random": 1}"#));
    ok(&["equilibria", "--scenario", s(&sc), "--out", s(dir.path())]);
    let report = read_json(&dir.path().join("report.json"));
    let eqs = report["viruses"][0]["equilibria"].as_array().unwrap();
    let (lo, hi) = scalar_roots(1.0, 0.5, 4.0);
    let mut found: Vec<(f64, String)> = eqs
        .iter()
        .map(|e| (e["state"][0].as_f64().unwrap(), e["classification"].as_str().unwrap().to_string()))
        .collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(found.len(), 3);
    assert!(found[0].0.abs() < 1e-9 && found[0].1 == "stable");
    assert!((found[1].0 - lo).abs() < 1e-9 && found[1].1 == "unstable");
    assert!((found[2].0 - hi).abs() < 1e-9 && found[2].1 == "stable");
    assert!(eqs.iter().all(|e| e["residual"].as_f64().unwrap() < 1e-9));
}

#[test]
fn sweep_brackets_bistability_boundary() {
    let dir = TempDir::new().unwrap();
    let sc = write(dir.path(), "s.json", &scalar(1.0, r#"{"random": 1}"#));
    ok(&["sweep", "--scenario", s(&sc), "--out", s(dir.path()), "--from", "0", "--to", "5", "--steps", "51"]);
    let (header, rows) = csv_rows(&dir.path().join("sweep.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    // Double root of the scalar quadratic: (β − β₃)² = 4β₃(δ − β) with δ = 1, β = 0.5.
    let boundary = (3.0 + 8f64.sqrt()) / 2.0;
    assert!((boundary - 2.914).abs() < 1e-3);
    for r in &rows {
        let f: f64 = r[col("factor")].parse().unwrap();
        let bistable = r[col("bistable")] == "true";
        assert_eq!(bistable, f > boundary, "factor {f}");
        let positive: usize = r[col("positive")].parse().unwrap();
        assert_eq!(positive, if f > boundary { 2 } else { 0 }, "factor {f}");
    }
}

#[test]
fn simulate_bistable_scalar_splits() {
    let dir = TempDir::new().unwrap();
    let sc = write(dir.path(), "s.json", &scalar(4.0, r#"{"states": [[0.1], [0.3]]}"#));
    ok(&["simulate", "--scenario", s(&sc), "--out", s(dir.path()), "--t-end", "200", "--format", "json"]);
    let report = read_json(&dir.path().join("report.json"));
    let runs = report["runs"].as_array().unwrap();
    let (_, hi) = scalar_roots(1.0, 0.5, 4.0);
    assert!(runs[0]["final_state"][0].as_f64().unwrap() < 1e-6);
    assert!((runs[1]["final_state"][0].as_f64().unwrap() - hi).abs() < 1e-6);
}

#[test]
fn extinction_regime_decays() {
    let dir = TempDir::new().unwrap();
    ok(&["gen", "--regime", "r0<1", "--seed", "11", "--out", s(dir.path())]);
    let sc = dir.path().join("scenario.json");
    let cl = dir.path().join("classify");
    ok(&["classify", "--scenario", s(&sc), "--out", s(&cl)]);
    assert_eq!(read_json(&cl.join("report.json"))["viruses"][0]["healthy"]["verdict"], "globally_exp_stable");
    ok(&["simulate", "--scenario", s(&sc), "--out", s(dir.path()), "--t-end", "20000"]);
    let (header, rows) = csv_rows(&dir.path().join("means.csv"));
    assert_eq!(header, ["run", "t", "mean_x", "mean_w"]);
    for run in ["0", "1", "2"] {
        let last = rows.iter().rev().find(|r| r[0] == run).unwrap();
        assert!(last[2].parse::<f64>().unwrap() < 1e-6, "run {run}: {last:?}");
        assert!(last[3].parse::<f64>().unwrap() < 1e-6, "run {run}: {last:?}");
    }
}

#[test]
fn outputs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    ok(&["gen", "--seed", "5", "--out", s(dir.path())]);
    let sc = dir.path().join("scenario.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&["simulate", "--scenario", s(&sc), "--out", s(d)]);
        ok(&["validate", "--scenario", s(&sc), "--out", s(d), "--runs", "40", "--t-end", "5", "--workers", "3"]);
        ok(&["equilibria", "--scenario", s(&sc), "--out", s(&d.join("eq"))]);
    }
    for f in ["trajectory.csv", "means.csv", "ensemble.csv", "report.json", "eq/report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (header, _) = csv_rows(&a.join("ensemble.csv"));
    assert_eq!(&header[..4], ["t", "mean_frac", "ci_half", "node_0"]);
}

#[test]
fn gen_is_deterministic_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen", "--seed", "9", "--viruses", "2", "--out", s(&a)]);
    ok(&["gen", "--seed", "9", "--viruses", "2", "--out", s(&b)]);
    let text = fs::read_to_string(a.join("scenario.json")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("scenario.json")).unwrap());
    let sc = read_json(&a.join("scenario.json"));
    assert_eq!((sc["nodes"]["n"].as_u64(), sc["nodes"]["m"].as_u64()), (Some(5), Some(2)));
}

#[test]
fn bivirus_report() {
    let dir = TempDir::new().unwrap();
    ok(&["gen", "--seed", "2", "--viruses", "2", "--out", s(dir.path())]);
    let sc = dir.path().join("scenario.json");
    ok(&["bivirus", "--scenario", s(&sc), "--out", s(dir.path())]);
    let r = read_json(&dir.path().join("report.json"));
    assert!(r["healthy_verdict"]["per_virus"].as_array().unwrap().len() == 2);
    assert!(r["coexistence"]["certified"].is_boolean());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad_state = write(dir.path(), "a.json", &scalar(4.0, r#"{"states": [[1.5]]}"#));
    let o = run(&["simulate", "--scenario", s(&bad_state), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));

    let typo = write(dir.path(), "b.json", &scalar(4.0, r#"{"random": 1}"#).replace("beta_pair", "beta_pairs"));
    let o = run(&["classify", "--scenario", s(&typo), "--out", s(dir.path())]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(1));
    assert!(err.contains("beta_pairs") && err.contains("line"), "{err}");

    let o = run(&["gen", "--regime", "bistable", "--max-tries", "3", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));

    let o = run(&["bivirus", "--scenario", s(&bad_state), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}
