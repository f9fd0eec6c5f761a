use std::fs;

use serde_json::Value;
use twogroup::cli::cli_main_with;
use twogroup::io::{load_config, RunConfig, RunManifest};

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = cli_main_with(
        std::iter::once("twogroup").chain(args.iter().copied()),
        &mut out,
    );
    (code, String::from_utf8(out).unwrap())
}

#[test]
fn lemma_ode_reports_roots() {
    let (code, out) = run(&[
        "lemma-ode",
        "--a11",
        "2",
        "--a12",
        "1",
        "--a21",
        "1",
        "--a22",
        "2",
        "--lambda0",
        "1",
    ]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!((v["delta"].as_f64().unwrap() - 12.0).abs() < 1e-12);
    assert!((v["lambda_plus"].as_f64().unwrap() - 3.7320508).abs() < 1e-7);
    assert!((v["lambda_minus"].as_f64().unwrap() - 0.2679492).abs() < 1e-7);
    assert!(v["riccati_slack"].as_f64().unwrap() >= -1e-8);
}

#[test]
fn lemma_ode_without_gap_is_runtime_error() {
    let (code, _) = run(&[
        "lemma-ode",
        "--a11",
        "0",
        "--a12",
        "1",
        "--a21",
        "1",
        "--a22",
        "0",
        "--lambda0",
        "1",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&["simulate", "--bogus"]).0, 2);
    assert_eq!(run(&["spectral", "--p", "1.5"]).0, 2);
    assert_eq!(run(&["spectral", "--scenario", "sometimes"]).0, 2);
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..2)
        .map(|i| dir.path().join(format!("traj{i}.csv")))
        .collect();
    let mut reports = Vec::new();
    for p in &paths {
        let (code, out) = run(&[
            "simulate",
            "--n",
            "20",
            "--p",
            "0.3",
            "--q",
            "0.2",
            "--scenario",
            "static",
            "--t-final",
            "20",
            "--seed",
            "7",
            "--sample-count",
            "21",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        reports.push(out);
    }
    assert_eq!(fs::read(&paths[0]).unwrap(), fs::read(&paths[1]).unwrap());
    assert_eq!(reports[0], reports[1]);
    let v: Value = serde_json::from_str(&reports[0]).unwrap();
    assert!(v["hyperplane_separated"].is_boolean());
    let csv = fs::read_to_string(&paths[0]).unwrap();
    assert_eq!(csv.lines().next(), Some("t,group,index,coord,value"));
    assert_eq!(csv.lines().count(), 1 + 21 * 40);
}

#[test]
fn manifest_reload_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let (code, first) = run(&[
        "simulate",
        "--n",
        "8",
        "--scenario",
        "resampled",
        "--tau",
        "0.5",
        "--t-final",
        "4",
        "--seed",
        "11",
        "--sample-count",
        "9",
        "--out",
        &d("a.csv"),
        "--manifest",
        &d("m.json"),
    ]);
    assert_eq!(code, 0);
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(d("m.json")).unwrap()).unwrap();
    assert_eq!(
        load_config(dir.path().join("m.json").as_path()).unwrap(),
        manifest.config
    );
    let (code, second) = run(&["simulate", "--config", &d("m.json"), "--out", &d("b.csv")]);
    assert_eq!(code, 0);
    assert_eq!(first, second);
    assert_eq!(fs::read(d("a.csv")).unwrap(), fs::read(d("b.csv")).unwrap());
}

#[test]
fn sweep_writes_csv_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"seed": 3, "sweep": {"n_values": [5, 10, 20], "n_test": 20, "n_discard": 1}}"#,
    )
    .unwrap();
    let out = dir.path().join("sweep.csv");
    let (code, summary) = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&summary).unwrap();
    assert!(v["fitted_slope"].as_f64().unwrap().is_finite());
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 4);
}

#[test]
fn spectral_reads_coupling_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(
        &path,
        r#"{"psi_plus_x": [[0,1,1],[1,0,1],[1,1,0]], "psi_plus_y": [[0,1],[1,0]], "psi_minus": [[0.2,0.2],[0.2,0.2],[0.2,0.2]]}"#,
    )
    .unwrap();
    let (code, out) = run(&["spectral", "--couplings", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!((v["fiedler_x"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["n1"], 3);
}

#[test]
fn concentration_reports_each_n() {
    let (code, out) = run(&["concentration", "--n-values", "10,20", "--samples", "10"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 2);
}

#[test]
fn default_config_file_matches_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    fs::write(&path, "{}").unwrap();
    assert_eq!(load_config(&path).unwrap(), RunConfig::default());
}
