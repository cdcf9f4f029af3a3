use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loocv_core::loocv::LoocvCurve;
use serde_json::Value;

fn loocv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loocv"))
        .args(args)
        .env_remove("LOOCV_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = loocv(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// 30 rows, two covariates and a noisy linear target.
fn dataset(dir: &Path) -> PathBuf {
    let path = dir.join("data.csv");
    let mut text = String::from("a,b,y\n");
    for i in 0..30 {
        let a = (i as f64 * 0.7).sin();
        let b = (i as f64 * 1.3).cos() + 0.1 * i as f64;
        let y = 2.0 * a - b + 0.3 * (i as f64 * 2.1).sin();
        text.push_str(&format!("{a},{b},{y}\n"));
    }
    fs::write(&path, text).unwrap();
    path
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn curve_writes_header_and_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let out = ok(&["curve", "--input", data.to_str().unwrap(), "--target", "y"]);
    let lines = data_lines(&out);
    assert_eq!(lines[0], "lambda,loss,grad,hess");
    assert_eq!(lines.len(), 401);
    assert!(out.starts_with("# tail_limit="));
}

#[test]
fn curve_honours_grid_flags_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let file = dir.path().join("curve.csv");
    ok(&[
        "curve",
        "--input",
        data.to_str().unwrap(),
        "--target",
        "y",
        "--lambda-min",
        "1e-3",
        "--lambda-max",
        "1e3",
        "--points",
        "50",
        "--out",
        file.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&file).unwrap();
    assert_eq!(data_lines(&text).len(), 51);
    let (curve, hash) = LoocvCurve::read_csv(&text).unwrap();
    assert_eq!(curve.len(), 50);
    assert_eq!(curve.lambdas[0], 1e-3);
    assert_eq!(hash.len(), 32);
    // writing the parsed curve reproduces the file
    let mut again = Vec::new();
    curve.write_csv(&mut again, &hash).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), text);

    let manifest: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("curve.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["resolved"]["problem_hash"], hash.as_str());
    assert!(manifest["wall_time_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn malformed_csv_fails_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "a,b,y\n1,2,3\n4,oops,6\n7,8,9\n1,1,1\n").unwrap();
    let out = loocv(&["curve", "--input", path.to_str().unwrap(), "--target", "y"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "{err}");
    let missing = loocv(&[
        "curve",
        "--input",
        path.to_str().unwrap(),
        "--target",
        "nope",
    ]);
    assert!(!missing.status.success());
}

#[test]
fn classify_emits_a_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let out = ok(&[
        "classify",
        "--input",
        data.to_str().unwrap(),
        "--target",
        "y",
    ]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["is_qvx"].is_boolean());
    assert!(v["minima"].is_array());
    assert!(v["sign_pattern"].is_string());
    assert_eq!(v["grid"]["points"], 400);
}

#[test]
fn diagnose_reports_zero_residual_for_exact_fits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exact.csv");
    let mut text = String::from("a,b,y\n");
    for i in 0..20 {
        let (a, b) = ((i as f64).sin(), (i as f64 * 0.37).cos());
        text.push_str(&format!("{a},{b},{}\n", 3.0 * a - 2.0 * b));
    }
    fs::write(&path, text).unwrap();
    let out = ok(&[
        "diagnose",
        "--input",
        path.to_str().unwrap(),
        "--target",
        "y",
    ]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["report"]["a1_value"].as_f64().unwrap() < 1e-20);
    assert_eq!(v["report"]["flat_spectrum"], false);
    assert!(v["certificate"].is_null());
}

#[test]
fn atlas_experiment_has_the_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("atlas.csv");
    ok(&[
        "experiment",
        "--kind",
        "atlas",
        "--out",
        file.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&file).unwrap();
    assert_eq!(data_lines(&text).len(), 1 + 100 * 100 * 3);
    assert!(text.contains("# scale=desk (reduced counts)"));
    assert!(dir.path().join("atlas.csv.manifest.json").exists());
}

#[test]
fn manifest_hash_tracks_flags() {
    let dir = tempfile::tempdir().unwrap();
    let hash = |extra: &[&str]| {
        let file = dir.path().join("decay.csv");
        let mut args = vec![
            "experiment",
            "--kind",
            "coherence-decay",
            "--out",
            file.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let cfg = dir.path().join("c.json");
        fs::write(
            &cfg,
            r#"{"kind":"coherence_decay","n_list":[30,60],"nu_reps":3}"#,
        )
        .unwrap();
        let cfg = cfg.to_str().unwrap().to_string();
        args.extend(["--config", &cfg]);
        ok(&args);
        let m: Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join("decay.csv.manifest.json")).unwrap(),
        )
        .unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    let base = hash(&[]);
    assert_eq!(hash(&[]), base);
    assert_ne!(hash(&["--seed", "3"]), base);
    assert_ne!(hash(&["--reps", "2"]), base);
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"kind":"coherence_decay","n_list":[30],"nu_reps":3}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_loocv"))
        .args(["experiment", "--config", cfg.to_str().unwrap()])
        .env("LOOCV_SEED", "41")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("# master_seed=41"));
}

#[test]
fn experiment_argument_errors() {
    assert!(!loocv(&["experiment"]).status.success());
    assert!(!loocv(&["experiment", "--kind", "nonsense"])
        .status
        .success());
    assert!(!loocv(&["experiment", "--kind", "realdata"])
        .status
        .success());
}

#[test]
fn version_names_the_output_format() {
    let out = ok(&["--version"]);
    assert!(out.contains("loocv-core") && out.contains("output format 1"));
}
