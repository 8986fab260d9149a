use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn hcdd(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcdd"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn hcdd")
}

/// Drops the trailing wall-clock column.
fn strip_timing(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[test]
fn smoke_preset_is_fast_and_converges() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = hcdd(&["run", "--preset", "smoke", "--export-coarse"], dir.path());
    let elapsed = start.elapsed();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(elapsed < Duration::from_secs(5), "smoke run took {elapsed:?}");
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "method,variant,eta,H,h,overlap_or_k,basis_count,coarse_dim,iterations,cond_estimate,wall_ms"
    );
    assert_eq!(lines.len(), 6);
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("results.json")).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["converged"] == true));
    assert!(dir.path().join("coarse/coarse_004.bin").exists());
    assert!(dir.path().join("coarse/coarse_004.json").exists());
}

#[test]
fn repeated_runs_agree_except_timing() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(hcdd(&["--jobs", "1", "run", "--preset", "smoke"], a.path()).status.success());
    assert!(hcdd(&["run", "--preset", "smoke"], b.path()).status.success());
    let ca = fs::read_to_string(a.path().join("results.csv")).unwrap();
    let cb = fs::read_to_string(b.path().join("results.csv")).unwrap();
    assert_eq!(strip_timing(&ca), strip_timing(&cb));
}

#[test]
fn non_convergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "grid": {"n_fine": 16, "n_coarse": 4},
            "coefficient": {"pattern": {"pattern": "constant"}, "eta": 1.0},
            "methods": [{"method": "one_level", "overlap": 1}],
            "pcg": {"tol": 1e-12, "maxit": 2}}"#,
    )
    .unwrap();
    let out = hcdd(&["run", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "grid": {"n_fine": 16, "n_coarse": 4, "n_mid": 8},
            "coefficient": {"pattern": {"pattern": "constant"}, "eta": 1.0},
            "methods": [{"method": "one_level", "overlap": 1}]}"#,
    )
    .unwrap();
    let out = hcdd(&["run", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n_mid"), "{err}");
}

#[test]
fn csv_coefficient_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let gen = hcdd(&["gen-coeff", "--preset", "smoke"], dir.path());
    assert!(gen.status.success());
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("coefficient.json")).unwrap()).unwrap();
    assert_eq!(meta["n_fine"], 32);
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "grid": {"n_fine": 32, "n_coarse": 4},
            "coefficient": {"csv": "coefficient.csv"},
            "methods": [{"method": "two_level", "variant": "hat"}]}"#,
    )
    .unwrap();
    let out = hcdd(&["run", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
