use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn write_config(dir: &TempDir, body: &str) -> PathBuf {
    let path = dir.path().join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn run(mode: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quirqi"))
        .arg(mode)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn error_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {:?}", out.stderr))
}

fn assert_schema_error(body: &str, mode: &str) {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, body);
    let out_dir = dir.path().join("out");
    let out = run(mode, &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(2), "{body}");
    let err = error_json(&out);
    assert_eq!(err["code"], "invalid_config");
    assert!(err["message"].as_str().unwrap().len() > 3);
    assert!(err["context"].is_object());
    assert!(!out_dir.exists(), "no artifacts on a schema error");
}

const DECAENE: &str = r#"{ "model": { "n_sites": 10 }, "solver": { "tau_mtx": 0.0 } }"#;

#[test]
fn solve_writes_trace_and_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, DECAENE);
    let out_dir = dir.path().join("solve");
    let out = run("solve", &cfg, &out_dir, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,omega,omega_p,omega_q,e_rel,g_max,lambda_p,lambda_q,nnz_fraction,block_products\n"));
    let summary: Value = serde_json::from_slice(&std::fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["result"]["status"], "converged");
    assert_eq!(summary["result"]["iterations"].as_u64().unwrap() as usize, trace.lines().count() - 1);
    assert!(summary["total_wall_ms"].as_f64().unwrap() >= 0.0);
    let xyz = std::fs::read_to_string(out_dir.join("geometry.xyz")).unwrap();
    assert_eq!(xyz.lines().next().unwrap().trim(), "10");
}

#[test]
fn reruns_produce_identical_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{ "model": { "n_sites": 8 }, "solver": { "guess": "random", "tau_mtx": 1e-6 } }"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("fig1", &cfg, &a, &["--seed", "3"]).status.success());
    assert!(run("fig1", &cfg, &b, &["--seed", "3"]).status.success());
    for name in ["trace_quirqi.csv", "trace_rqi_thouless.csv", "trace_tda_rqi.csv", "convergence.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{ "model": { "n_sites": 8 }, "solver": { "guess": "random", "seed": 1 } }"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("solve", &cfg, &a, &[]).status.success());
    assert!(run("solve", &cfg, &b, &["--seed", "2"]).status.success());
    assert_ne!(std::fs::read(a.join("trace.csv")).unwrap(), std::fs::read(b.join("trace.csv")).unwrap());
    let summary: Value = serde_json::from_slice(&std::fs::read(b.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["solver"]["seed"], 2);
}

#[test]
fn compare_reports_four_digit_agreement() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, DECAENE);
    let out_dir = dir.path().join("cmp");
    assert!(run("compare", &cfg, &out_dir, &[]).status.success());
    let csv = std::fs::read_to_string(out_dir.join("compare.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    let rel: f64 = col("rel_error").parse().unwrap();
    let abs: f64 = col("abs_error").parse().unwrap();
    let oracle: f64 = col("omega_oracle").parse().unwrap();
    assert!(rel.abs() <= 1e-4);
    assert!((abs / oracle - rel).abs() <= 1e-15);
    // seventeen significant digits
    assert_eq!(col("omega").split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
}

#[test]
fn oracle_mode_lists_roots() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{ "model": { "n_sites": 6 } }"#);
    let out_dir = dir.path().join("oracle");
    assert!(run("oracle", &cfg, &out_dir, &[]).status.success());
    let csv = std::fs::read_to_string(out_dir.join("roots.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "root,omega,x_norm,y_norm");
    assert_eq!(csv.lines().count(), 1 + 9);
}

#[test]
fn sweep_and_scaling_tables() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{ "model": { "n_sites": 10 }, "tau_list": [1e-4, 1e-6] }"#);
    let out_dir = dir.path().join("sweep");
    assert!(run("threshold-sweep", &cfg, &out_dir, &[]).status.success());
    let csv = std::fs::read_to_string(out_dir.join("threshold_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);

    let cfg = write_config(
        &dir,
        r#"{ "model": { "alternation": 0.1, "kernel_cutoff": 8.4, "ground_threshold": 1e-5 },
             "solver": { "max_iter": 3 }, "chain_lengths": [16, 32, 48] }"#,
    );
    let out_dir = dir.path().join("scaling");
    assert!(run("scaling", &cfg, &out_dir, &[]).status.success());
    let csv = std::fs::read_to_string(out_dir.join("scaling.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
    let summary: Value = serde_json::from_slice(&std::fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["result"]["products_per_iteration_fit"]["r_squared"].as_f64().is_some());
}

#[test]
fn schema_violations_are_rejected() {
    assert_schema_error(r#"{ "model": {} }"#, "solve");
    assert_schema_error(r#"{ "model": { "n_sites": 10 }, "bogus": 1 }"#, "solve");
    assert_schema_error(r#"{ "model": { "n_sites": 10, "hoping": -2.0 } }"#, "solve");
    assert_schema_error(r#"{ "model": { "n_sites": 10 }, "solver": { "epsilon": 2.0 } }"#, "solve");
    assert_schema_error(r#"{ "model": { "n_sites": 10 }, "solver": { "tol": 1 } }"#, "solve");
    assert_schema_error(r#"{ "model": { "n_sites": "ten" } }"#, "solve");
    assert_schema_error(r#"{ "mode": "scaling", "model": { "n_sites": 10 } }"#, "solve");
    assert_schema_error(r#"{ "model": { "n_sites": 10 } }"#, "threshold-sweep");
    assert_schema_error(r#"{ "model": {} }"#, "scaling");
    assert_schema_error(r#"{ "model": { "n_sites": 80 } }"#, "oracle");
    assert_schema_error(r#"{ "model": { "n_sites": 9 } }"#, "solve");
    assert_schema_error("not json", "solve");
}

#[test]
fn unstable_model_has_its_own_exit_code() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{ "model": { "n_sites": 10, "triplet": true, "kernel_u": 14.0, "hopping": -1.0 } }"#,
    );
    let out_dir = dir.path().join("out");
    let out = run("compare", &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["code"], "unstable_model");
    assert!(!out_dir.exists());
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = run("solve", &dir.path().join("absent.json"), &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
}
