//! Output artifacts: run directories, manifests, CSV and JSON writers.
//! Floats are written with 17 significant digits so files round-trip
//! bit-exactly.

use std::io::Write;
use std::path::{Path, PathBuf};

use pulsefield_core::meanfield::TrajectoryRecord;
use pulsefield_core::particles::ParticleEnsemble;
use pulsefield_core::phase_response::PhaseResponse;
use pulsefield_core::quantile::QuantileProfile;

use crate::CliError;

pub fn f(x: f64) -> String {
    format!("{x:.16e}")
}

/// Output root: `--out` flag, else `PULSEFIELD_OUT`, else `./out`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var("PULSEFIELD_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("out")
}

pub fn run_dir(root: &Path, name: &str) -> Result<PathBuf, CliError> {
    let dir = root.join(name);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Run(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn write_text(dir: &Path, file: &str, content: &str) -> Result<(), CliError> {
    let path = dir.join(file);
    let mut out = std::fs::File::create(&path)
        .map_err(|e| CliError::Run(format!("cannot create {}: {e}", path.display())))?;
    out.write_all(content.as_bytes())
        .map_err(|e| CliError::Run(format!("write {}: {e}", path.display())))
}

pub fn write_json<T: serde::Serialize>(dir: &Path, file: &str, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Run(format!("serialize {file}: {e}")))?;
    write_text(dir, file, &(text + "\n"))
}

pub fn trajectory_csv(traj: &TrajectoryRecord) -> String {
    let mut out = String::from("step,tau,t,n_tilde,N,minZ,maxZ,res_compat,res_boundary\n");
    for r in &traj.rows {
        let n = if r.n_tilde.abs() > 1e-300 {
            1.0 / r.n_tilde
        } else {
            f64::INFINITY
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.step,
            f(r.tau),
            f(r.t),
            f(r.n_tilde),
            f(n),
            f(r.min_z),
            f(r.max_z),
            f(r.res_compat),
            f(r.res_boundary)
        ));
    }
    out
}

/// Snapshot CSV with header `eta,Q,Z,H`.
pub fn snapshot_csv(profile: &QuantileProfile, k: &PhaseResponse) -> String {
    let m = profile.grid_size();
    let mut out = String::from("eta,Q,Z,H\n");
    for j in 0..=m {
        let q = profile.q()[j];
        let z = profile.z()[j];
        out.push_str(&format!(
            "{},{},{},{}\n",
            f(j as f64 / m as f64),
            f(q),
            f(z),
            f(z - k.k(q))
        ));
    }
    out
}

pub fn spikes_csv(e: &ParticleEnsemble) -> String {
    let mut out = String::from("event_index,t,cascade_size\n");
    for s in e.spike_log() {
        out.push_str(&format!(
            "{},{},{}\n",
            s.event_index,
            f(s.t),
            s.cascade_size
        ));
    }
    out
}

pub fn ensemble_csv(e: &ParticleEnsemble) -> String {
    let mut phases = e.phases().to_vec();
    phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = String::from("phase\n");
    for p in phases {
        out.push_str(&f(p));
        out.push('\n');
    }
    out
}
