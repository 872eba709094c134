use std::path::Path;
use std::process::{Command, Output};

fn qht(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qht"))
        .args(args)
        .current_dir(cwd)
        .env_remove("QHT_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_then_adapt() {
    let dir = tempfile::tempdir().unwrap();
    let out = qht(
        &[
            "simulate", "--state", "vacuum", "--n", "1000", "--eta", "1.0", "--seed", "7", "--out",
            "d/",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("d/dataset.bin").exists());

    let out = qht(
        &[
            "adapt", "--data", "d/", "--grid", "default", "--kappa", "1", "--points", "64",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("d/selection.csv")).unwrap();
    assert!(csv.starts_with("m,h_m,L(m),sup_diff_max_j,threshold\n"));
    // γ = 0 uses the geometric grid: ⌊log2 1000⌋ / 2 = 4 bandwidths.
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn estimate_writes_grid_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = qht(
        &[
            "simulate", "--state", "cat:3", "--n", "500", "--eta", "0.9", "--out", "d",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let out = qht(
        &[
            "estimate",
            "--data",
            "d/dataset.bin",
            "--h",
            "0.4",
            "--points",
            "32",
            "--out",
            "e",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let side: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("e/estimate_h0.4.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(side["method"], "binned-fbp");
    assert_eq!(side["state"]["kind"], "cat");
}

#[test]
fn output_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_qht"))
        .args([
            "simulate", "--state", "fock:2", "--n", "50", "--out", "ignored",
        ])
        .current_dir(dir.path())
        .env("QHT_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(target.join("dataset.bin").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = qht(
        &["simulate", "--state", "cat:-1", "--n", "10", "--out", "x"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    let out = qht(
        &[
            "simulate", "--state", "vacuum", "--n", "10", "--eta", "0.2", "--out", "x",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"state": {"kind": "vacuum"}, "n": "ten"}"#,
    )
    .unwrap();
    let out = qht(&["run", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`n`"), "{}", stderr(&out));

    let out = qht(
        &[
            "estimate",
            "--data",
            "missing.bin",
            "--h",
            "0.4",
            "--out",
            "e",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn state_info_and_dry_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = qht(&["state-info", "--state", "single-photon"], dir.path());
    assert!(out.status.success());
    let info: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((info["wigner_at_origin"].as_f64().unwrap() + 1.0 / std::f64::consts::PI).abs() < 1e-6);

    let out = qht(
        &["reproduce-figure", "cat", "--seeds", "3", "--dry-run"],
        dir.path(),
    );
    assert!(out.status.success());
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["n"], 500_000);
    assert_eq!(cfg["seeds"], serde_json::json!([0, 1, 2]));
    assert_eq!(cfg["grid"]["half_width"], 8.0);
}

#[test]
fn run_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "state": {"kind": "single-photon"},
        "n": 200,
        "eta": 0.9,
        "seeds": [5],
        "grid": {"half_width": 6.0, "n_points": 32},
        "outputs": "run"
    }"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let out = qht(&["run", "--config", "cfg.json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("run/manifest.json").exists());
    assert!(dir.path().join("run/lepski_seed5.csv").exists());
}
