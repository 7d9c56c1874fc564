use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use ppm_core::{Link, ModelSpec};

fn ppm(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppm"))
        .current_dir(cwd)
        .args(args)
        .env_remove("PPM_SEED")
        .output()
        .expect("spawn ppm")
}

fn ok(cwd: &Path, args: &[&str]) -> Output {
    let out = ppm(cwd, args);
    assert!(
        out.status.success(),
        "ppm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--out", "a.csv", "--seed", "7"]);
    ok(dir.path(), &["simulate", "--out", "b.csv", "--seed", "7"]);
    ok(dir.path(), &["simulate", "--out", "c.csv", "--seed", "8"]);
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_ne!(a, fs::read(dir.path().join("c.csv")).unwrap());
    assert_eq!(csv_rows(&dir.path().join("a.csv")), 100);
}

#[test]
fn simulate_subsample_keeps_every_eighth_row() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["simulate", "--out", "sub.csv", "--subsample-k", "8"],
    );
    assert_eq!(csv_rows(&dir.path().join("sub.csv")), 12);
}

#[test]
fn negative_sigma_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ppm(dir.path(), &["simulate", "--out", "x.csv", "--sigma", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn seed_environment_variable_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["simulate", "--out", "flag.csv", "--seed", "42"],
    );
    let out = Command::new(env!("CARGO_BIN_EXE_ppm"))
        .current_dir(dir.path())
        .args(["simulate", "--out", "env.csv", "--seed", "1"])
        .env("PPM_SEED", "42")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        fs::read(dir.path().join("flag.csv")).unwrap(),
        fs::read(dir.path().join("env.csv")).unwrap()
    );

    let bad = Command::new(env!("CARGO_BIN_EXE_ppm"))
        .current_dir(dir.path())
        .args(["simulate", "--out", "bad.csv"])
        .env("PPM_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn fit_missing_dataset_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ppm(
        dir.path(),
        &[
            "fit",
            "--data",
            "nope.csv",
            "--form",
            "true",
            "--out-dir",
            "fit",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_then_predict_regression() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--out", "data.csv"]);
    ok(
        d,
        &[
            "fit",
            "--data",
            "data.csv",
            "--form",
            "true",
            "--out-dir",
            "fit",
        ],
    );
    let diag = json(&d.join("fit/diagnostics.json"));
    assert_eq!(diag["converged"], Value::Bool(true));
    let r_hat: Vec<f64> = diag["diagnostics"]["r_hat"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(r_hat.iter().all(|&r| r <= 1.05), "{r_hat:?}");
    assert_eq!(csv_rows(&d.join("fit/draws.csv")), 4000);
    assert_eq!(diag["run"]["command"], "fit");

    ok(
        d,
        &[
            "predict",
            "--model",
            "fit/model.json",
            "--draws",
            "fit/draws.csv",
            "--x",
            "0.5",
            "--threshold",
            "1.2",
            "--out-dir",
            "pred",
        ],
    );
    let s = json(&d.join("pred/summary.json"));
    let p = &s["models"][0]["predictions"][0];
    assert!((p["mean"].as_f64().unwrap() - 0.87).abs() < 0.05);
    let exceed = p["p_exceeds"]["value"].as_f64().unwrap();
    assert!((0.0..0.05).contains(&exceed));

    ok(
        d,
        &[
            "predict",
            "--form",
            "true",
            "--draws",
            "fit/draws.csv",
            "--grid",
            "0:0.3:0.05",
            "--truncate-lower",
            "0",
            "--out-dir",
            "trunc",
        ],
    );
    let s = json(&d.join("trunc/summary.json"));
    for p in s["models"][0]["predictions"].as_array().unwrap() {
        assert!(p["pi_lower"].as_f64().unwrap() >= 0.0);
    }

    ok(
        d,
        &[
            "predict",
            "--form",
            "true",
            "--draws",
            "fit/draws.csv",
            "--x",
            "0.15",
            "--x-se",
            "0.06",
            "--out-dir",
            "xerr",
        ],
    );
    let plain = json(&d.join("pred/summary.json"));
    let with_error = json(&d.join("xerr/summary.json"));
    assert!(
        with_error["models"][0]["predictions"][0]["sd"]
            .as_f64()
            .unwrap()
            > 0.0
    );
    assert!(plain["run"]["flags"]["x_se"].is_null());
}

#[test]
fn plug_in_fit_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--out", "data.csv"]);
    ok(
        d,
        &[
            "fit",
            "--data",
            "data.csv",
            "--form",
            "quadratic",
            "--plug-in",
            "--out-dir",
            "map",
        ],
    );
    assert_eq!(csv_rows(&d.join("map/plug_in.csv")), 1);
    let report = json(&d.join("map/plug_in.json"));
    assert_eq!(report["estimate"].as_object().unwrap().len(), 4);

    ok(
        d,
        &[
            "predict",
            "--form",
            "quadratic",
            "--draws",
            "map/plug_in.csv",
            "--x",
            "0.5",
            "--out-dir",
            "pred",
        ],
    );
    assert_eq!(csv_rows(&d.join("pred/samples.csv")), 4000);
}

#[test]
fn averaging_three_models_writes_widths() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--out", "data.csv"]);
    for form in ["quadratic", "exp2", "michaelis-menten"] {
        ok(
            d,
            &[
                "fit",
                "--data",
                "data.csv",
                "--form",
                form,
                "--out-dir",
                form,
                "--warmup",
                "3000",
                "--allow-unconverged",
            ],
        );
    }
    ok(
        d,
        &[
            "predict",
            "--form",
            "quadratic",
            "--form",
            "exp2",
            "--form",
            "michaelis-menten",
            "--draws",
            "quadratic/draws.csv",
            "--draws",
            "exp2/draws.csv",
            "--draws",
            "michaelis-menten/draws.csv",
            "--grid",
            "0:2:0.5",
            "--out-dir",
            "avg",
        ],
    );
    let widths = fs::read_to_string(d.join("avg/widths.csv")).unwrap();
    assert!(widths.starts_with("x,Quadratic,Exp2,MichaelisMenten,averaged"));
    assert_eq!(widths.lines().count(), 6);
    let s = json(&d.join("avg/summary.json"));
    assert_eq!(s["combined"].as_array().unwrap().len(), 5);

    let bad = ppm(
        d,
        &[
            "predict",
            "--form",
            "quadratic",
            "--form",
            "exp2",
            "--draws",
            "quadratic/draws.csv",
            "--draws",
            "exp2/draws.csv",
            "--grid",
            "0:1:0.5",
            "--grid",
            "0:2:0.5",
            "--out-dir",
            "bad",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("inconsistent grids"));
}

#[test]
fn decompose_classification_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "simulate",
            "--classification",
            "--n",
            "200",
            "--out",
            "cls.csv",
        ],
    );
    let model = ModelSpec::classification(2, Link::Logit).unwrap();
    fs::write(d.join("logit.json"), serde_json::to_vec(&model).unwrap()).unwrap();
    ok(
        d,
        &[
            "fit",
            "--data",
            "cls.csv",
            "--model",
            "logit.json",
            "--out-dir",
            "fit",
        ],
    );
    ok(
        d,
        &[
            "decompose",
            "--model",
            "logit.json",
            "--draws",
            "fit/draws.csv",
            "--query",
            "0,0",
            "--query",
            "-2.5,2.5",
            "--boundary-grid",
            "-3:3:0.5",
            "--out-dir",
            "dec",
        ],
    );
    let report = json(&d.join("dec/decomposition.json"));
    for r in report["records"].as_array().unwrap() {
        let mu = r["mu_bar"].as_f64().unwrap();
        let total = r["aleatoric"].as_f64().unwrap() + r["epistemic"].as_f64().unwrap();
        assert!((total - mu * (1.0 - mu)).abs() <= 1e-12);
        assert_eq!(r["y_predictive"].as_f64().unwrap(), mu);
    }
    assert_eq!(csv_rows(&d.join("dec/boundary.csv")), 13);

    ok(d, &["simulate", "--out", "reg.csv"]);
    ok(
        d,
        &[
            "fit",
            "--data",
            "reg.csv",
            "--form",
            "true",
            "--out-dir",
            "reg",
        ],
    );
    let out = ppm(
        d,
        &[
            "decompose",
            "--model",
            "reg/model.json",
            "--draws",
            "reg/draws.csv",
            "--query",
            "0.5",
            "--out-dir",
            "x",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn no_arguments_prints_help_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = ppm(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}
