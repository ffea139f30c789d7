use std::path::Path;
use std::process::{Command, Output};

fn shiftreg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shiftreg"))
        .args(args)
        .current_dir(dir)
        .env_remove("SHIFTREG_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bound_prints_one_positive_number() {
    let dir = tempfile::tempdir().unwrap();
    let o = shiftreg(
        &["bound", "--n", "512", "--sigma", "2", "--density", "raised-cosine:0.2", "--template", "paper"],
        dir.path(),
    );
    assert!(o.status.success(), "{o:?}");
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!(v > 0.0);
}

#[test]
fn bound_with_uniform_prior_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = shiftreg(&["bound", "--n", "512", "--sigma", "2", "--density", "uniform:0.2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-differentiable"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = shiftreg(&["bound", "--frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(shiftreg(&["bound", "--n", "8", "--sigma", "1", "--density", "gauss:1"], dir.path()).status.code(), Some(1));
    assert_eq!(shiftreg(&[], dir.path()).status.code(), Some(1));
    assert_eq!(shiftreg(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let o = shiftreg(
        &["simulate", "--n", "128", "--j", "6", "--sigma", "0", "--density", "uniform:0.1", "--out", "data/d.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(dir.path().join("data/d.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("j,t_1,t_2,") && header.ends_with(",t_128"));
    assert_eq!(csv.lines().count(), 7);
    assert!(dir.path().join("data/d.json").exists());

    let o = shiftreg(&["estimate", "--input", "data/d.csv", "--out", "r.json"], dir.path());
    assert!(o.status.success(), "{o:?}");
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r["theta_hat"].as_array().unwrap().len(), 6);
    assert!(r["shift_error"].as_f64().unwrap() <= 1e-8);
    assert!(r["pattern_error"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn experiment_writes_csv_and_two_svgs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"scenario": "sim", "n_list": [64, 128], "j_list": [3, 5], "repetitions": 2}"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_shiftreg"))
        .args(["experiment", "--config", "cfg.json"])
        .current_dir(dir.path())
        .env("SHIFTREG_OUTPUT_DIR", "out")
        .output()
        .unwrap();
    assert!(o.status.success(), "{o:?}");
    let out = dir.path().join("out");
    let records = std::fs::read_to_string(out.join("sim_records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 2 * 2 * 2);
    for m in ["shift", "pattern"] {
        let svg = std::fs::read_to_string(out.join(format!("sim_{m}_boxplot.svg"))).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("box")).count(), 4);
    }
    assert!(out.join("sim_summary.csv").exists());
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"scenario": "sim", "colour": "red"}"#).unwrap();
    let o = shiftreg(&["experiment", "--config", "cfg.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    let o = shiftreg(&["experiment", "--config", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_cell_does_not_crash() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"scenario": "stationary", "n_list": [3], "j_list": [2], "lambda": 1, "repetitions": 1, "output_dir": "o"}"#,
    )
    .unwrap();
    let o = shiftreg(&["experiment", "--config", "cfg.json"], dir.path());
    assert!(o.status.success(), "{o:?}");
}
