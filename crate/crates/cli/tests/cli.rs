//! End-to-end checks of the command-line surfaces: exit codes, artifact
//! layout, format headers, and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pulsefield"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pulsefield-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_BLOWUP: &str = r#"{
  "name": "itest-blowup",
  "K": { "form": "affine", "k": 0.75, "b": 0.2 },
  "phi_f": 1.0,
  "initial": { "preset": "perturbed_steady", "epsilon": 0.1, "mode_number": 1 },
  "solver": { "m": 64 },
  "mode": "original",
  "tau_end": 30.0
}"#;

#[test]
fn simulate_records_blowup_with_tau_star() {
    let dir = tmp_dir("simulate");
    let cfg = write_config(&dir, "scenario.json", SMALL_BLOWUP);
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("itest-blowup/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["outcome"]["kind"], "blown_up");
    assert!(summary["outcome"]["tau_star"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(dir.join("itest-blowup/trajectory.csv")).unwrap();
    assert!(csv.starts_with("step,tau,t,n_tilde,N,minZ,maxZ,res_compat,res_boundary\n"));
    assert!(dir.join("itest-blowup/manifest.json").exists());
}

#[test]
fn identical_config_gives_byte_identical_output() {
    let d1 = tmp_dir("det1");
    let d2 = tmp_dir("det2");
    for d in [&d1, &d2] {
        let cfg = write_config(d, "scenario.json", SMALL_BLOWUP);
        assert!(bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(d)
            .status()
            .unwrap()
            .success());
    }
    let a = std::fs::read(d1.join("itest-blowup/trajectory.csv")).unwrap();
    let b = std::fs::read(d2.join("itest-blowup/trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn steady_state_reports_rate_and_profile() {
    let dir = tmp_dir("steady");
    let cfg = write_config(
        &dir,
        "scenario.json",
        r#"{
          "name": "itest-steady",
          "K": { "form": "affine", "k": 0.0, "b": 0.5 },
          "phi_f": 1.0,
          "initial": { "preset": "steady_state" },
          "solver": { "m": 64 },
          "tau_end": 1.0
        }"#,
    );
    assert!(bin()
        .args(["steady-state", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap()
        .success());
    let result: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("itest-steady-steady/result.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(result["exists"], true);
    assert!((result["N_star"].as_f64().unwrap() - 2.0).abs() < 1e-8);
    let profile = std::fs::read_to_string(dir.join("itest-steady-steady/profile.csv")).unwrap();
    assert!(profile.starts_with("eta,Q,Z\n"));
}

#[test]
fn steady_state_negative_case() {
    let dir = tmp_dir("nosteady");
    let cfg = write_config(
        &dir,
        "scenario.json",
        r#"{
          "name": "itest-nosteady",
          "K": { "form": "affine", "k": 0.0, "b": 2.0 },
          "phi_f": 1.0,
          "initial": { "preset": "steady_state" },
          "solver": { "m": 64 },
          "tau_end": 1.0
        }"#,
    );
    assert!(bin()
        .args(["steady-state", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap()
        .success());
    let result: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("itest-nosteady-steady/result.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(result["exists"], false);
    assert!((result["harmonic_integral"].as_f64().unwrap() - 0.5).abs() < 1e-8);
}

#[test]
fn config_error_names_offending_key_and_exits_one() {
    let dir = tmp_dir("badcfg");
    let cfg = write_config(
        &dir,
        "scenario.json",
        r#"{
          "name": "itest-bad",
          "K": { "form": "affine", "k": 0.75, "b": 0.2 },
          "phi_f": 1.0,
          "initial": { "preset": "perturbed_steady", "epsilon": 0.1, "mode_number": 1 },
          "solver": { "m": 4 },
          "tau_end": 5.0
        }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("solver.m"), "stderr was: {stderr}");
}

#[test]
fn incompatible_initial_data_is_a_config_error() {
    let dir = tmp_dir("incompat");
    // Uniform table data violates first-order compatibility for sloped K.
    let q: Vec<String> = (0..=64).map(|j| format!("{}", j as f64 / 64.0)).collect();
    let z: Vec<String> = (0..=64).map(|_| "1.0".to_string()).collect();
    let cfg = write_config(
        &dir,
        "scenario.json",
        &format!(
            r#"{{
              "name": "itest-incompat",
              "K": {{ "form": "affine", "k": 0.75, "b": 0.2 }},
              "phi_f": 1.0,
              "initial": {{ "preset": "explicit_table", "q": [{}], "z": [{}] }},
              "solver": {{ "m": 64 }},
              "tau_end": 5.0
            }}"#,
            q.join(","),
            z.join(",")
        ),
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("incompatible"));
}

#[test]
fn particles_writes_spike_log() {
    let dir = tmp_dir("particles");
    let cfg = write_config(
        &dir,
        "scenario.json",
        r#"{
          "name": "itest-particles",
          "K": { "form": "affine", "k": 0.0, "b": 0.5 },
          "phi_f": 1.0,
          "initial": { "preset": "steady_state" },
          "solver": { "m": 64 },
          "tau_end": 1.0,
          "particles": { "count": 500, "seed": 7, "t_end": 2.0 }
        }"#,
    );
    assert!(bin()
        .args(["particles", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap()
        .success());
    let spikes = std::fs::read_to_string(dir.join("itest-particles-particles/spikes.csv")).unwrap();
    assert!(spikes.starts_with("event_index,t,cascade_size\n"));
    assert!(spikes.lines().count() > 100);
    let ensemble =
        std::fs::read_to_string(dir.join("itest-particles-particles/ensemble.csv")).unwrap();
    assert!(ensemble.starts_with("phase\n"));
    assert_eq!(ensemble.lines().count(), 501);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("itest-particles-particles/summary.json")).unwrap(),
    )
    .unwrap();
    let rate = summary["empirical_rate"].as_f64().unwrap();
    assert!(rate > 1.0 && rate < 3.0, "rate = {rate}");
}

#[test]
fn beta_like_preset_resolves_and_runs() {
    let dir = tmp_dir("beta");
    let cfg = write_config(
        &dir,
        "scenario.json",
        r#"{
          "name": "itest-beta",
          "K": { "form": "quadratic", "c0": 1.2, "c1": -0.4, "c2": -0.1 },
          "phi_f": 1.0,
          "initial": { "preset": "beta_like", "a": 2.0, "b": 2.0 },
          "solver": { "m": 100 },
          "tau_end": 0.5,
          "reports": ["structural"]
        }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let reports: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("itest-beta/reports.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(reports[0]["theorem"], "structural-invariants");
    assert_eq!(reports[0]["pass"], true);
}

#[test]
fn sweep_runs_every_cell() {
    let dir = tmp_dir("sweep");
    let cfg = write_config(
        &dir,
        "sweep.json",
        r#"{
          "base": {
            "name": "itest-scan",
            "K": { "form": "affine", "k": 0.0, "b": 0.5 },
            "phi_f": 1.0,
            "initial": { "preset": "steady_state" },
            "mode": "original",
            "tau_end": 0.5
          },
          "axes": [
            { "path": "solver.m", "values": [32, 64] },
            { "path": "K.b", "values": [0.5, 0.4] }
          ]
        }"#,
    );
    assert!(bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--jobs", "2", "--out"])
        .arg(&dir)
        .status()
        .unwrap()
        .success());
    let cells: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("itest-scan__"))
        .collect();
    assert_eq!(cells.len(), 4, "expected 4 sweep cells");
    for cell in cells {
        assert!(cell.path().join("manifest.json").exists());
        assert!(cell.path().join("trajectory.csv").exists());
    }
}

#[test]
fn out_env_variable_sets_output_root() {
    let dir = tmp_dir("envout");
    let cfg = write_config(&dir, "scenario.json", SMALL_BLOWUP);
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .env("PULSEFIELD_OUT", &dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.join("itest-blowup/trajectory.csv").exists());
}

#[test]
fn verify_default_suite_passes_and_writes_reports() {
    let dir = tmp_dir("verify");
    let out = bin()
        .args(["verify", "--suite", "default", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "verify failed:\n{stdout}");
    assert!(
        stdout.matches("[PASS]").count() >= 12,
        "missing pass lines:\n{stdout}"
    );
    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("verify/reports.json")).unwrap())
            .unwrap();
    assert!(reports.as_array().unwrap().len() >= 13);
}
