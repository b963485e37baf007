use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clocksync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clocksync"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn simulate_then_estimate_noise_free() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"n_rounds_grid": [25], "sigma2": 0.0, "fixed_params": {"alpha": 1.004, "beta": -2.5, "d": 3.0}}"#,
    );
    let csv = dir.path().join("log.csv");
    let csv = csv.to_str().unwrap();
    stdout(&clocksync(&["simulate", "--config", &config, "--out", csv]));
    assert!(dir.path().join("log.json").exists());
    assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 26);

    for method in ["raw", "svd", "lrma"] {
        let text = stdout(&clocksync(&["estimate", "--in", csv, "--method", method]));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,alpha_hat,beta_hat,d_hat,residual_norm");
        let fields: Vec<&str> = lines[1].split(',').collect();
        let alpha: f64 = fields[1].parse().unwrap();
        let beta: f64 = fields[2].parse().unwrap();
        let d: f64 = fields[3].parse().unwrap();
        assert!((alpha - 1.004).abs() < 1e-9, "{method}: {alpha}");
        assert!((beta + 2.5).abs() < 1e-8, "{method}: {beta}");
        assert!((d - 3.0).abs() < 1e-8, "{method}: {d}");
    }
}

#[test]
fn estimate_accepts_rank_and_tau() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"n_rounds_grid": [40]}"#);
    let csv = dir.path().join("log.csv");
    let csv = csv.to_str().unwrap();
    stdout(&clocksync(&["simulate", "--config", &config, "--out", csv, "--trial", "3"]));
    let text = stdout(&clocksync(&[
        "estimate", "--in", csv, "--method", "lrma", "--rank", "2", "--tau", "0.5",
    ]));
    assert!(text.lines().nth(1).unwrap().starts_with("MLE_LRMA,"));
}

#[test]
fn experiment_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"n_rounds_grid": [10, 20], "trials": 20, "master_seed": 5}"#);
    let out = dir.path().join("out");
    stdout(&clocksync(&[
        "experiment",
        "--config",
        &config,
        "--out-dir",
        out.to_str().unwrap(),
        "--fixed-params",
        "1.002,4.0,2.5",
    ]));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "n,method,mse_alpha,mse_beta,crlb_alpha,crlb_beta,trials,wall_time_ms"
    );
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(fs::read_to_string(out.join("curves.svg")).unwrap().starts_with("<svg"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn crlb_prints_json_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"n_rounds_grid": [10, 50], "trials": 50}"#);
    let text = stdout(&clocksync(&["crlb", "--config", &config]));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(v["trials"], 50);
    let skew = |i: usize| rows[i]["crlb_alpha"].as_f64().unwrap();
    assert!(skew(0) > skew(1) && skew(1) > 0.0);

    let single = stdout(&clocksync(&["crlb", "--config", &config, "--trial", "0"]));
    let v: serde_json::Value = serde_json::from_str(&single).unwrap();
    assert_eq!(v["trials"], 1);
}

#[test]
fn errors_exit_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = clocksync(&["crlb", "--config", missing.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope.json"), "{err}");

    let config = write_config(dir.path(), r#"{"trials": 0}"#);
    let out = clocksync(&["crlb", "--config", &config]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));

    let bad_csv = dir.path().join("bad.csv");
    fs::write(&bad_csv, "round,t1,t2,t3,t4\n1,0,1,2,x\n").unwrap();
    let out = clocksync(&["estimate", "--in", bad_csv.to_str().unwrap(), "--method", "raw"]);
    assert!(!out.status.success());

    let out = clocksync(&["experiment", "--config", &config, "--out-dir", "x", "--fixed-params", "1,2"]);
    assert!(!out.status.success());
}
