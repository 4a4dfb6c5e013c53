//! End-to-end tests of the `qcurv` binary: exit codes, report layout,
//! schema stability, and byte determinism of seeded runs.

use std::path::Path;
use std::process::{Command, Output};

fn qcurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcurv"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const SMALL_SPHERES: &str = r#"{
  "model": {
    "factor_a": { "kind": "sphere", "lmax": 3, "n_theta": 8 },
    "factor_b": { "kind": "sphere", "lmax": 3, "n_theta": 8 },
    "s_max": 12.0
  }
}"#;

fn report_json(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn invariants_run_writes_a_full_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "inv.json", SMALL_SPHERES);
    let out_dir = tmp.path().join("out");

    let out = qcurv(&["invariants", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    assert!(out_dir.join("report.json").is_file());
    assert!(out_dir.join("resolved_config.json").is_file());

    let report = report_json(&out_dir);
    assert_eq!(report["command"], "invariants");
    let kp = report["result"]["total_curvature"].as_f64().unwrap();
    let expected = 16.0 * std::f64::consts::PI.powi(2) / 3.0;
    assert!((kp - expected).abs() < 1e-8, "k_P = {kp}");
    let defect = report["model"]["gauss_bonnet_defect"].as_f64().unwrap();
    assert!(defect.abs() < 1e-6, "defect = {defect}");
    // The resolved config embedded in the report matches its hash source.
    assert_eq!(report["config"]["seed"], 0);
}

#[test]
fn invalid_inputs_exit_2_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("never");

    // Unknown top-level key.
    let bad_key = SMALL_SPHERES.replacen('{', r#"{ "mystery": 1,"#, 1);
    let cfg = write_config(tmp.path(), "bad_key.json", &bad_key);
    let out = qcurv(&["invariants", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(msg.contains("mystery"), "stderr: {msg}");
    assert!(!out_dir.exists(), "failed runs must not create output");

    // Invalid option value caught by validation, not serde.
    let bad_tol = SMALL_SPHERES.replacen(
        '{',
        r#"{ "solver": { "grad_tol": -1.0 },"#,
        1,
    );
    let cfg = write_config(tmp.path(), "bad_tol.json", &bad_tol);
    let out = qcurv(&["solve", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());

    // Unreadable config path.
    let missing = tmp.path().join("missing.json").display().to_string();
    let out = qcurv(&["invariants", "--config", &missing]);
    assert_eq!(out.status.code(), Some(2));

    // Malformed JSON.
    let cfg = write_config(tmp.path(), "syntax.json", "{ not json");
    let out = qcurv(&["invariants", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn degenerate_total_curvature_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    // Genus 2 x genus 4 at kappa = -1 puts the total curvature exactly on
    // the second quantization level, which the solve regime refuses.
    let cfg = write_config(
        tmp.path(),
        "degen.json",
        r#"{
  "model": {
    "factor_a": { "kind": "hyperbolic", "genus": 2, "kappa": -1.0, "n_eig": 16, "resolution": 6 },
    "factor_b": { "kind": "hyperbolic", "genus": 4, "kappa": -1.0, "n_eig": 16, "resolution": 6 },
    "s_max": 20.0
  }
}"#,
    );
    let out = qcurv(&["solve", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(msg.contains("pi^2"), "stderr: {msg}");
}

#[test]
fn seeded_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{
  "model": {
    "factor_a": { "kind": "sphere", "lmax": 3, "n_theta": 8 },
    "factor_b": { "kind": "sphere", "lmax": 3, "n_theta": 8 },
    "s_max": 12.0
  },
  "seed": 5,
  "minmax": { "k": 2, "lambda_bar": 20.0, "n_sigma": 4, "n_t": 7 }
}"#;
    let cfg = write_config(tmp.path(), "mm.json", body);
    let out_dir = tmp.path().join("out");
    let out_str = out_dir.to_str().unwrap();

    let run = |label: &str| {
        let out = qcurv(&["minmax", "--config", &cfg, "--out", out_str]);
        assert!(
            out.status.success(),
            "{label} stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };

    let first = run("first");
    let second = run("second");
    assert_eq!(
        first.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        vec![
            "profiles.csv".to_string(),
            "report.json".to_string(),
            "resolved_config.json".to_string(),
            "witness_rho.csv".to_string(),
        ]
    );
    for ((name_a, bytes_a), (_, bytes_b)) in first.iter().zip(second.iter()) {
        assert_eq!(bytes_a, bytes_b, "{name_a} differs between identical runs");
    }

    // A different seed must change the sampled barycenters in the report.
    let out = qcurv(&["minmax", "--config", &cfg, "--out", out_str, "--seed", "99"]);
    assert!(out.status.success());
    let reseeded = std::fs::read(out_dir.join("report.json")).unwrap();
    let original = &first.iter().find(|(n, _)| n == "report.json").unwrap().1;
    assert_ne!(&reseeded, original);
}

#[test]
fn csv_headers_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "spec.json", SMALL_SPHERES);
    let out_dir = tmp.path().join("out");
    let out = qcurv(&["spectrum", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());

    let first_line = |name: &str| {
        std::fs::read_to_string(out_dir.join(name))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(first_line("eigenvalues.csv"), "rank,eigenvalue");
    assert_eq!(
        first_line("modes.csv"),
        "mode,factor_a_index,factor_b_index,eigenvalue_sum,operator_eigenvalue"
    );
}

#[test]
fn solve_run_reports_convergence_on_a_flat_model() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{
  "model": {
    "factor_a": { "kind": "torus", "l1": 1.0, "l2": 1.0, "kmax": 4 },
    "factor_b": { "kind": "torus", "l1": 1.0, "l2": 1.0, "kmax": 4 },
    "s_max": 200.0
  },
  "solver": { "initializer": { "type": "random", "amplitude": 0.05 } }
}"#;
    let cfg = write_config(tmp.path(), "flat.json", body);
    let out_dir = tmp.path().join("out");
    let out = qcurv(&["solve", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = report_json(&out_dir);
    assert_eq!(report["result"]["status"]["converged"], true);
    // Zero total curvature: the solution is the flat metric itself.
    let sup = report["result"]["field_sup_norm"].as_f64().unwrap();
    assert!(sup < 1e-6, "sup = {sup}");
    assert!(out_dir.join("history.csv").is_file());
    assert!(out_dir.join("field.csv").is_file());
    assert!(out_dir.join("coefficients.csv").is_file());
}
