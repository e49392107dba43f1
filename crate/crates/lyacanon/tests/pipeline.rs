//! Drives the installed binary end to end: each subcommand against the
//! bundled example, checking exit codes, report schemas and CSV headers.

use std::path::Path;
use std::process::Command;

fn run(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lyacanon"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env("LYACANON_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn json(dir: &Path, file: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(file))
        .unwrap_or_else(|e| panic!("{file} exists: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{file} is valid JSON: {e}"))
}

fn first_line(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file))
        .unwrap_or_else(|e| panic!("{file} exists: {e}"))
        .lines()
        .next()
        .expect("file has a header row")
        .to_string()
}

#[test]
fn stability_subcommand_reports_stable_evidence() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["stability"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let report = json(dir.path(), "stability.json");
    let components = report["components"].as_array().unwrap();
    assert_eq!(components.len(), 2);
    for c in components {
        assert_eq!(c["rank"], 1);
        assert_eq!(c["parity"], "odd");
        assert_eq!(c["sign"], "negative");
        assert_eq!(c["amap"]["violations"], 0);
        assert_eq!(c["verdict"], "stable-evidence");
    }
    assert!(report["lyapunov"]["min_V"].as_f64().unwrap() > 0.0);
    assert!(report["lyapunov"]["max_dVdt"].as_f64().unwrap() < 0.0);
    assert_eq!(report["lyapunov"]["verified"], true);
    assert_eq!(report["scan"]["inclusion"], "stable-evidence");
    assert!(!report["scan"]["per_curve"].as_array().unwrap().is_empty());
    assert!(!report["scan"]["per_system"].as_array().unwrap().is_empty());
}

#[test]
fn simulate_subcommand_emits_plot_data_and_passes_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--oracle"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    assert_eq!(first_line(dir.path(), "integral_curves.csv"), "c1,c2,t,x1,x2");
    assert_eq!(first_line(dir.path(), "criterion_time.csv"), "c1,c2,t,value");
    for file in ["level_sections.csv", "criterion_surface.csv", "rhs_surface.csv"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }

    let report = json(dir.path(), "simulate.json");
    let dev = report["oracle_max_deviation"].as_f64().unwrap();
    let threshold = report["oracle_threshold"].as_f64().unwrap();
    assert!(dev < threshold, "oracle deviation {dev} over {threshold}");
    assert!(dev < 1e-6);
    let points = report["sweep"]["points"].as_array().unwrap();
    assert!(!points.is_empty());
    assert!(points.iter().all(|p| p["error"].is_null() || p["summary"].is_null()));
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(a.path(), &["simulate"]).status.success());
    assert!(run(b.path(), &["simulate"]).status.success());
    for file in ["integral_curves.csv", "criterion_time.csv", "rhs_surface.csv"] {
        let left = std::fs::read(a.path().join(file)).unwrap();
        let right = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(left, right, "{file} differs between identical runs");
    }
}

#[test]
fn reproduce_example_passes_every_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["reproduce-example"]);
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );

    let summary = json(dir.path(), "summary.json");
    let criteria = summary["criteria"].as_array().unwrap();
    assert_eq!(criteria.len(), 11);
    for c in criteria {
        assert_eq!(c["pass"], true, "criterion {} failed: {}", c["id"], c["detail"]);
    }
    for (_, file) in [
        ("integral curves", "integral_curves.csv"),
        ("level sections", "level_sections.csv"),
    ] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
}

#[test]
fn loosened_tolerance_still_passes_at_looser_gate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--oracle", "--rel-tol", "1e-4"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(dir.path(), "simulate.json");
    let dev = report["oracle_max_deviation"].as_f64().unwrap();
    assert!(dev < 1e-3, "deviation {dev} should stay below the loosened gate");
}
