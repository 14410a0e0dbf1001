//! Scenario configuration: JSON schema, defaults, and resolution into solver
//! inputs. Every run directory gets a `manifest.json` echoing the resolved
//! config so defaults are never silent.

use serde::{Deserialize, Serialize};

use pulsefield_core::initial;
use pulsefield_core::meanfield::{validate_initial, RunMode, SolverConfig};
use pulsefield_core::phase_response::{PhaseResponse, PhaseResponseForm};
use pulsefield_core::quantile::QuantileProfile;
use pulsefield_core::steady_state;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(rename = "K")]
    pub k: PhaseResponseForm,
    pub phi_f: f64,
    pub initial: InitialSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub mode: ModeSpec,
    pub tau_end: f64,
    #[serde(default)]
    pub particles: Option<ParticleSpec>,
    /// Dump a profile snapshot CSV every this many steps (0 = final only).
    #[serde(default)]
    pub snapshot_every: usize,
    /// Per-run reports to evaluate after `simulate`; see [`ReportKind`].
    #[serde(default)]
    pub reports: Vec<ReportKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    /// A-priori blow-up bounds checked against the recorded run.
    BlowupBounds,
    /// Residual of the mean-phase moment identity.
    MomentIdentity,
    /// Residual of the harmonic-weight moment identity.
    MomentInverseK,
    /// Per-step boundary and compatibility residuals.
    Structural,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    #[default]
    Original,
    Relaxed,
}

impl From<ModeSpec> for RunMode {
    fn from(m: ModeSpec) -> RunMode {
        match m {
            ModeSpec::Original => RunMode::Original,
            ModeSpec::Relaxed => RunMode::Relaxed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// The stationary profile itself (requires existence).
    SteadyState,
    /// Stationary profile plus a compatibility-preserving bump.
    PerturbedSteady { epsilon: f64, mode_number: u32 },
    /// Beta-shaped density with endpoint-derivative correction.
    BetaLike { a: f64, b: f64 },
    /// Explicit node values on the solver grid (m + 1 entries each).
    ExplicitTable { q: Vec<f64>, z: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default = "default_blowup_eps")]
    pub blowup_eps: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_true")]
    pub store_profiles: bool,
}

fn default_m() -> usize {
    200
}
fn default_newton_tol() -> f64 {
    1e-12
}
fn default_newton_max_iter() -> usize {
    60
}
fn default_blowup_eps() -> f64 {
    1e-8
}
fn default_max_steps() -> usize {
    200_000
}
fn default_true() -> bool {
    true
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            m: default_m(),
            newton_tol: default_newton_tol(),
            newton_max_iter: default_newton_max_iter(),
            blowup_eps: default_blowup_eps(),
            max_steps: default_max_steps(),
            store_profiles: true,
        }
    }
}

impl From<&SolverSpec> for SolverConfig {
    fn from(s: &SolverSpec) -> SolverConfig {
        SolverConfig {
            m: s.m,
            newton_tol: s.newton_tol,
            newton_max_iter: s.newton_max_iter,
            blowup_eps: s.blowup_eps,
            max_steps: s.max_steps,
            store_profiles: s.store_profiles,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub count: usize,
    pub seed: u64,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub max_spikes: Option<u64>,
}

/// Parsed scenario resolved into ready-to-run pieces.
pub struct Resolved {
    pub scenario: Scenario,
    pub k: PhaseResponse,
    pub profile: QuantileProfile,
    pub n_init: f64,
    pub warnings: Vec<String>,
}

pub fn load_scenario(path: &std::path::Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn resolve(scenario: Scenario) -> Result<Resolved, CliError> {
    if !scenario.tau_end.is_finite() || scenario.tau_end <= 0.0 {
        return Err(CliError::Config(format!(
            "tau_end must be positive, got {}",
            scenario.tau_end
        )));
    }
    if scenario.solver.m < 8 {
        return Err(CliError::Config(format!(
            "solver.m must be at least 8, got {}",
            scenario.solver.m
        )));
    }
    let k = PhaseResponse::new(scenario.k.clone(), scenario.phi_f)
        .map_err(|e| CliError::Config(format!("K: {e}")))?;
    let m = scenario.solver.m;
    let profile = match &scenario.initial {
        InitialSpec::SteadyState => {
            let ss = steady_state::solve(&k, m)
                .map_err(|e| CliError::Config(format!("initial.steady_state: {e}")))?;
            ss.profile
        }
        InitialSpec::PerturbedSteady {
            epsilon,
            mode_number,
        } => {
            let ss = steady_state::solve(&k, m)
                .map_err(|e| CliError::Config(format!("initial.perturbed_steady: {e}")))?;
            initial::perturbed_steady(&ss, &k, *epsilon, *mode_number)
                .map_err(|e| CliError::Config(format!("initial.perturbed_steady: {e}")))?
        }
        InitialSpec::BetaLike { a, b } => initial::beta_like(&k, m, *a, *b)
            .map_err(|e| CliError::Config(format!("initial.beta_like: {e}")))?,
        InitialSpec::ExplicitTable { q, z } => {
            if q.len() != m + 1 || z.len() != m + 1 {
                return Err(CliError::Config(format!(
                    "initial.explicit_table: expected {} node values (solver.m + 1), got q: {}, z: {}",
                    m + 1,
                    q.len(),
                    z.len()
                )));
            }
            QuantileProfile::from_parts(q.clone(), z.clone())
                .map_err(|e| CliError::Config(format!("initial.explicit_table: {e}")))?
        }
    };
    let (n_init, warnings) = validate_initial(&profile, &k)
        .map_err(|e| CliError::Config(format!("initial data rejected: {e}")))?;
    Ok(Resolved {
        scenario,
        k,
        profile,
        n_init,
        warnings,
    })
}
