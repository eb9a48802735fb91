use std::path::Path;
use std::process::{Command, Output};

use doe::model_file::{load_set, set_exists};
use doe_core::icnn::Architecture;

fn doe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doe")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = doe(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let col = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[col].parse().unwrap()).collect()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(doe(&["solve", "--out", out, "--method", "B7"]).status.code(), Some(2));
    assert_eq!(
        doe(&["solve", "--out", out, "--method", "B0,B3"]).status.code(),
        Some(2)
    );
    assert_eq!(doe(&["solve", "--out", out, "--method", "B1"]).status.code(), Some(2));
    assert_eq!(
        doe(&["solve", "--out", out, "--weights", "w_q=3"]).status.code(),
        Some(2)
    );
    assert_eq!(doe(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn generate_is_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        run_ok(&[
            "generate-data",
            "--out",
            d.path().to_str().unwrap(),
            "--samples",
            "10",
            "--seed",
            "3",
        ]);
    }
    for name in ["manifest.json", "inputs.csv", "v.csv", "i.csv", "loss.csv"] {
        let x = std::fs::read(a.path().join("data").join(name)).unwrap();
        let y = std::fs::read(b.path().join("data").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let rows = csv_column(&a.path().join("data").join("loss.csv"), "loss_kw");
    assert_eq!(rows.len(), 10);
}

#[test]
fn workflow_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["generate-data", "--out", out, "--samples", "200"]);
    run_ok(&["train", "--out", out, "--epochs", "2"]);
    let models = dir.path().join("models");
    for arch in [Architecture::Icnn, Architecture::Mlp] {
        assert!(set_exists(&models, arch));
        let set = load_set(&models, arch).unwrap();
        if arch == Architecture::Icnn {
            assert!(set.models().iter().all(|m| m.min_z_weight() >= 0.0));
        }
    }
    assert!(models.join("nmae.json").exists());

    run_ok(&["solve", "--out", out, "--method", "B0", "--intervals", "44..48"]);
    let j1 = csv_column(&dir.path().join("results").join("b0.csv"), "j1");
    assert_eq!(j1, vec![0.0; 4]);

    run_ok(&[
        "solve",
        "--out",
        out,
        "--method",
        "b1",
        "--intervals",
        "2",
        "--weights",
        "w_v=500",
    ]);
    assert_eq!(csv_column(&dir.path().join("results").join("b1.csv"), "j3").len(), 2);

    run_ok(&[
        "benchmark",
        "--out",
        out,
        "--method",
        "B0,B1,B2,B3",
        "--intervals",
        "46..48",
    ]);
    let report = dir.path().join("report.md");
    let first = std::fs::read_to_string(&report).unwrap();
    assert!(first.contains("| B3 | 2 |"));
    std::fs::remove_file(&report).unwrap();
    run_ok(&["report", "--out", out]);
    assert_eq!(std::fs::read_to_string(&report).unwrap(), first);
    let series = std::fs::read_to_string(dir.path().join("results").join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 4 * 2);
}
