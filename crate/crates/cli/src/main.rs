//! Scenario-driven command line for the pulse-coupled oscillator lab.
//!
//! Subcommands: `simulate` (mean-field run), `particles` (event-driven
//! ensemble), `steady-state` (dichotomy and shooting), `verify` (theorem
//! battery), `sweep` (cartesian parameter scans). Exit codes: 0 ok, 1 config
//! error, 2 run error, 3 verification failure.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use pulsefield_core::meanfield::{self, MeanFieldState, RunOutcome};
use pulsefield_core::particles::{ParticleEnsemble, RunLimit};
use pulsefield_core::phase_response::PhaseResponse;
use pulsefield_core::steady_state::{self, Existence};
use pulsefield_core::suite;

use config::{load_scenario, resolve, ReportKind, Resolved, Scenario};
use pulsefield_core::diagnostics::{self, MomentKind, TheoremReport};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
    VerificationFailed,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Run(m) => write!(f, "run error: {m}"),
            CliError::VerificationFailed => write!(f, "verification failed"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "pulsefield",
    version,
    about = "Mean-field pulse-coupled oscillator lab"
)]
struct Cli {
    /// Output root directory (overrides PULSEFIELD_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the mean-field solver on a scenario config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the event-driven particle ensemble of a scenario.
    Particles {
        #[arg(long)]
        config: PathBuf,
    },
    /// Decide steady-state existence and solve for the stationary profile.
    SteadyState {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the theorem-verification battery.
    Verify {
        #[arg(long, default_value = "default")]
        suite: String,
    },
    /// Run the cartesian product of parameter overrides, one cell per
    /// directory.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for independent cells.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = output::output_root(cli.out.as_deref());
    let result = match &cli.command {
        Command::Simulate { config } => cmd_simulate(config, &root),
        Command::Particles { config } => cmd_particles(config, &root),
        Command::SteadyState { config } => cmd_steady_state(config, &root),
        Command::Verify { suite } => cmd_verify(suite, &root),
        Command::Sweep { config, jobs } => cmd_sweep(config, *jobs, &root),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Config(_) => ExitCode::from(1),
                CliError::Run(_) => ExitCode::from(2),
                CliError::VerificationFailed => ExitCode::from(3),
            }
        }
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    outcome: RunOutcome,
    steps: usize,
    final_tau: f64,
    final_t: f64,
    n_init: f64,
    /// True when node values left [0, phi_f] and the smooth extension of K
    /// carried part of the dynamics.
    left_physical_domain: bool,
    warnings: Vec<String>,
}

fn cmd_simulate(config_path: &Path, root: &Path) -> Result<(), CliError> {
    let resolved = resolve(load_scenario(config_path)?)?;
    let dir = output::run_dir(root, &resolved.scenario.name)?;
    output::write_json(&dir, "manifest.json", &resolved.scenario)?;
    let traj = run_meanfield(&resolved)?;
    output::write_text(&dir, "trajectory.csv", &output::trajectory_csv(&traj))?;
    if let Ok(snaps) = traj.snapshots() {
        let every = resolved.scenario.snapshot_every;
        for (i, snap) in snaps.iter().enumerate() {
            let last = i + 1 == snaps.len();
            if (every > 0 && i % every == 0) || last {
                output::write_text(
                    &dir,
                    &format!("snapshot_{i:06}.csv"),
                    &output::snapshot_csv(snap, &resolved.k),
                )?;
            }
        }
    }
    let last = traj.rows.last().expect("at least the initial row");
    output::write_json(
        &dir,
        "summary.json",
        &SimulateSummary {
            outcome: traj.outcome,
            steps: traj.rows.len() - 1,
            final_tau: last.tau,
            final_t: last.t,
            n_init: resolved.n_init,
            left_physical_domain: traj.left_physical_domain,
            warnings: resolved.warnings.clone(),
        },
    )?;
    if traj.left_physical_domain {
        println!("note: the profile left [0, phi_f]; the response extension carried part of the dynamics");
    }
    if !resolved.scenario.reports.is_empty() {
        let reports = run_reports(&resolved, &traj)?;
        output::write_json(&dir, "reports.json", &reports)?;
        for r in &reports {
            println!("{}", r.summary_line());
        }
    }
    match traj.outcome {
        RunOutcome::Completed => println!("completed: tau = {:.6}, t = {:.6}", last.tau, last.t),
        RunOutcome::BlownUp { tau_star, t_star } => {
            println!("blown up: tau* = {tau_star:.6}, t* = {t_star:.6}")
        }
        RunOutcome::RelaxedContinued { tau_star, t_star } => {
            println!("relaxed through blow-up: tau* = {tau_star:.6}, t* = {t_star:.6}")
        }
    }
    Ok(())
}

fn run_reports(
    resolved: &Resolved,
    traj: &meanfield::TrajectoryRecord,
) -> Result<Vec<TheoremReport>, CliError> {
    let name = &resolved.scenario.name;
    let mut out = Vec::new();
    for kind in &resolved.scenario.reports {
        let report = match kind {
            ReportKind::BlowupBounds => {
                diagnostics::blowup_bounds(&resolved.k, &resolved.profile, Some(traj))
                    .map(|b| b.report(name))
            }
            ReportKind::MomentIdentity | ReportKind::MomentInverseK => {
                let (moment_kind, theorem) = if *kind == ReportKind::MomentIdentity {
                    (MomentKind::Identity, "moment-identity")
                } else {
                    (MomentKind::InverseK, "moment-inverse-k")
                };
                diagnostics::moment_series(traj, &resolved.k, moment_kind).map(|series| {
                    // The identity residual is O(dtau + 1/M).
                    let tol = 20.0 / resolved.scenario.solver.m as f64;
                    let max = series.max_identity_residual();
                    TheoremReport {
                        theorem: theorem.into(),
                        scenario: name.clone(),
                        measured: vec![("max_identity_residual".into(), max)],
                        bounds: vec![("tolerance".into(), tol)],
                        pass: max <= tol,
                        tolerance: tol,
                    }
                })
            }
            ReportKind::Structural => {
                diagnostics::structural_check(traj, resolved.scenario.solver.newton_tol).map(
                    |check| TheoremReport {
                        theorem: "structural-invariants".into(),
                        scenario: name.clone(),
                        measured: vec![
                            ("max_res_boundary".into(), check.max_res_boundary),
                            ("max_res_compat".into(), check.max_res_compat),
                            ("min_z".into(), check.min_z),
                        ],
                        bounds: vec![("newton_tol".into(), resolved.scenario.solver.newton_tol)],
                        pass: check.pass,
                        tolerance: resolved.scenario.solver.newton_tol,
                    },
                )
            }
        };
        out.push(report.map_err(|e| CliError::Run(format!("report {kind:?}: {e}")))?);
    }
    Ok(out)
}

fn run_meanfield(resolved: &Resolved) -> Result<meanfield::TrajectoryRecord, CliError> {
    let cfg = (&resolved.scenario.solver).into();
    let (state, _) = MeanFieldState::from_profile(
        resolved.profile.clone(),
        &resolved.k,
        resolved.scenario.mode.into(),
    )
    .map_err(|e| CliError::Run(e.to_string()))?;
    meanfield::run(state, resolved.scenario.tau_end, &resolved.k, &cfg)
        .map_err(|e| CliError::Run(format!("scenario {}: {e}", resolved.scenario.name)))
}

#[derive(Serialize)]
struct ParticleSummary {
    count: usize,
    seed: u64,
    elapsed_t: f64,
    events: usize,
    total_resets: u64,
    empirical_rate: f64,
}

fn cmd_particles(config_path: &Path, root: &Path) -> Result<(), CliError> {
    let resolved = resolve(load_scenario(config_path)?)?;
    let Some(pspec) = resolved.scenario.particles.clone() else {
        return Err(CliError::Config(
            "scenario has no `particles` section".into(),
        ));
    };
    let limit = match (pspec.t_end, pspec.max_spikes) {
        (Some(t), None) => RunLimit::UntilTime(t),
        (None, Some(s)) => RunLimit::UntilSpikes(s),
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "particles: set exactly one of t_end / max_spikes".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Config(
                "particles: set one of t_end / max_spikes".into(),
            ))
        }
    };
    let dir = output::run_dir(root, &format!("{}-particles", resolved.scenario.name))?;
    output::write_json(&dir, "manifest.json", &resolved.scenario)?;
    let mut ensemble =
        ParticleEnsemble::from_profile_iid(&resolved.profile, pspec.count, pspec.seed)
            .map_err(|e| CliError::Run(e.to_string()))?;
    ensemble.run(&resolved.k, limit);
    output::write_text(&dir, "spikes.csv", &output::spikes_csv(&ensemble))?;
    output::write_text(&dir, "ensemble.csv", &output::ensemble_csv(&ensemble))?;
    let rate = if ensemble.time() > 0.0 {
        ensemble.total_resets() as f64 / (ensemble.count() as f64 * ensemble.time())
    } else {
        f64::NAN
    };
    output::write_json(
        &dir,
        "summary.json",
        &ParticleSummary {
            count: ensemble.count(),
            seed: pspec.seed,
            elapsed_t: ensemble.time(),
            events: ensemble.spike_log().len(),
            total_resets: ensemble.total_resets(),
            empirical_rate: rate,
        },
    )?;
    println!(
        "particles: {} events, {} resets, empirical rate {rate:.6}",
        ensemble.spike_log().len(),
        ensemble.total_resets()
    );
    Ok(())
}

#[derive(Serialize)]
struct SteadyStateOutput {
    exists: bool,
    harmonic_integral: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary_case: Option<bool>,
    #[serde(rename = "N_star", skip_serializing_if = "Option::is_none")]
    n_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    profile_csv: Option<String>,
}

fn cmd_steady_state(config_path: &Path, root: &Path) -> Result<(), CliError> {
    let scenario = load_scenario(config_path)?;
    let k = PhaseResponse::new(scenario.k.clone(), scenario.phi_f)
        .map_err(|e| CliError::Config(format!("K: {e}")))?;
    let dir = output::run_dir(root, &format!("{}-steady", scenario.name))?;
    output::write_json(&dir, "manifest.json", &scenario)?;
    let existence = steady_state::exists(&k).map_err(|e| CliError::Run(e.to_string()))?;
    let out = match existence {
        Existence::Exists { harmonic_integral } => {
            let ss = steady_state::solve(&k, scenario.solver.m)
                .map_err(|e| CliError::Run(e.to_string()))?;
            output::write_text(&dir, "profile.csv", &ss.profile.to_csv())?;
            SteadyStateOutput {
                exists: true,
                harmonic_integral,
                boundary_case: None,
                n_star: Some(ss.n_star),
                profile_csv: Some("profile.csv".into()),
            }
        }
        Existence::None {
            harmonic_integral,
            boundary,
        } => SteadyStateOutput {
            exists: false,
            harmonic_integral,
            boundary_case: boundary.then_some(true),
            n_star: None,
            profile_csv: None,
        },
    };
    output::write_json(&dir, "result.json", &out)?;
    match out.n_star {
        Some(n) => println!("steady state exists: N* = {n:.12}"),
        None => {
            println!(
                "no steady state: harmonic integral = {:.12}",
                out.harmonic_integral
            )
        }
    }
    Ok(())
}

fn cmd_verify(suite_name: &str, root: &Path) -> Result<(), CliError> {
    if suite_name != "default" {
        return Err(CliError::Config(format!(
            "unknown suite `{suite_name}` (only `default`)"
        )));
    }
    let dir = output::run_dir(root, "verify")?;
    output::write_json(
        &dir,
        "manifest.json",
        &serde_json::json!({ "suite": suite_name }),
    )?;
    let mut results = suite::run_all();
    match suite::steady_moment_report() {
        Ok(report) => results.push(suite::CriterionResult {
            id: results.len() + 1,
            name: "moment-identity spot check".into(),
            pass: report.pass,
            details: format!(
                "series drift {:?}",
                report
                    .measured
                    .iter()
                    .map(|(k, v)| format!("{k}={v:.2e}"))
                    .collect::<Vec<_>>()
            ),
            reports: vec![report],
        }),
        Err(e) => results.push(suite::CriterionResult {
            id: results.len() + 1,
            name: "moment-identity spot check".into(),
            pass: false,
            details: e.to_string(),
            reports: vec![],
        }),
    }
    for r in &results {
        println!("{}", r.summary_line());
    }
    output::write_json(&dir, "reports.json", &results)?;
    if results.iter().all(|r| r.pass) {
        println!("verify: all {} checks passed", results.len());
        Ok(())
    } else {
        Err(CliError::VerificationFailed)
    }
}

#[derive(serde::Deserialize, Serialize)]
struct SweepConfig {
    base: serde_json::Value,
    axes: Vec<SweepAxis>,
}

#[derive(serde::Deserialize, Serialize, Clone)]
struct SweepAxis {
    /// Dotted path into the scenario JSON, e.g. `solver.m` or `K.k`.
    path: String,
    values: Vec<serde_json::Value>,
}

fn set_path(
    target: &mut serde_json::Value,
    path: &str,
    value: &serde_json::Value,
) -> Result<(), CliError> {
    let mut cursor = target;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cursor.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("sweep path `{path}`: `{part}` is not an object"))
        })?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value.clone());
            return Ok(());
        }
        cursor = obj
            .entry((*part).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

fn sanitize(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_sweep(config_path: &Path, jobs: Option<usize>, root: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let sweep: SweepConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    if sweep.axes.is_empty() {
        return Err(CliError::Config("sweep needs at least one axis".into()));
    }
    let mut cells: Vec<Vec<usize>> = vec![vec![]];
    for axis in &sweep.axes {
        if axis.values.is_empty() {
            return Err(CliError::Config(format!(
                "sweep axis `{}` has no values",
                axis.path
            )));
        }
        let mut next = Vec::new();
        for cell in &cells {
            for vi in 0..axis.values.len() {
                let mut c = cell.clone();
                c.push(vi);
                next.push(c);
            }
        }
        cells = next;
    }
    let base_name = sweep
        .base
        .get("name")
        .and_then(|v| v.as_str())
        .unwrap_or("sweep")
        .to_string();
    let scenarios: Vec<(String, Scenario)> = cells
        .iter()
        .map(|cell| -> Result<(String, Scenario), CliError> {
            let mut value = sweep.base.clone();
            let mut tags = Vec::new();
            for (axis, &vi) in sweep.axes.iter().zip(cell) {
                let v = &axis.values[vi];
                set_path(&mut value, &axis.path, v)?;
                tags.push(sanitize(&format!("{}={}", axis.path, v)));
            }
            let cell_name = format!("{base_name}__{}", tags.join("__"));
            set_path(
                &mut value,
                "name",
                &serde_json::Value::String(cell_name.clone()),
            )?;
            let scenario: Scenario = serde_json::from_value(value)
                .map_err(|e| CliError::Config(format!("cell {cell_name}: {e}")))?;
            Ok((cell_name, scenario))
        })
        .collect::<Result<_, _>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Run(e.to_string()))?;
    let outcomes: Vec<Result<String, CliError>> = pool.install(|| {
        scenarios
            .into_par_iter()
            .map(|(cell_name, scenario)| {
                let resolved = resolve(scenario)?;
                let dir = output::run_dir(root, &cell_name)?;
                output::write_json(&dir, "manifest.json", &resolved.scenario)?;
                let traj = run_meanfield(&resolved)?;
                output::write_text(&dir, "trajectory.csv", &output::trajectory_csv(&traj))?;
                if let Ok(snaps) = traj.snapshots() {
                    if let Some(last) = snaps.last() {
                        output::write_text(
                            &dir,
                            &format!("snapshot_{:06}.csv", snaps.len() - 1),
                            &output::snapshot_csv(last, &resolved.k),
                        )?;
                    }
                }
                let last = traj.rows.last().expect("rows");
                output::write_json(
                    &dir,
                    "summary.json",
                    &SimulateSummary {
                        outcome: traj.outcome,
                        steps: traj.rows.len() - 1,
                        final_tau: last.tau,
                        final_t: last.t,
                        n_init: resolved.n_init,
                        left_physical_domain: traj.left_physical_domain,
                        warnings: resolved.warnings.clone(),
                    },
                )?;
                Ok(cell_name)
            })
            .collect()
    });
    let mut failed = None;
    for outcome in outcomes {
        match outcome {
            Ok(name) => println!("cell done: {name}"),
            Err(e) => {
                eprintln!("cell failed: {e}");
                failed = Some(e);
            }
        }
    }
    match failed {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
