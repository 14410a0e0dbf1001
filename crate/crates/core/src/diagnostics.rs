//! Executable checks of the contraction, moment and blow-up statements on
//! recorded trajectories.
//!
//! Every check produces a [`TheoremReport`] so the CLI can emit a uniform
//! JSON array and fail the process on any violation.

use serde::Serialize;
use thiserror::Error;

use crate::meanfield::{MeanFieldError, RunOutcome, TrajectoryRecord};
use crate::phase_response::{PhaseResponse, PhaseResponseError, PhaseResponseForm};
use crate::quad;
use crate::quantile::{self, QuantileError, QuantileProfile};
use crate::steady_state::{self, SteadyStateError};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("initial distance below 1e-12; the two runs share their initial data")]
    DegenerateDistance,
    #[error("the exact-rate identity needs an affine phase response")]
    NotAffine,
    #[error("trajectories carry no stored snapshots")]
    MissingSnapshots,
    #[error("trajectories live on different grids or snapshot counts")]
    Mismatch,
    #[error("no a-priori bound applies: {0}")]
    InapplicableBound(String),
    #[error(transparent)]
    Quantile(#[from] QuantileError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
    #[error(transparent)]
    Response(#[from] PhaseResponseError),
    #[error(transparent)]
    SteadyState(#[from] SteadyStateError),
}

/// Uniform verdict record for one theorem check on one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremReport {
    pub theorem: String,
    pub scenario: String,
    pub measured: Vec<(String, f64)>,
    pub bounds: Vec<(String, f64)>,
    pub pass: bool,
    pub tolerance: f64,
}

impl TheoremReport {
    pub fn summary_line(&self) -> String {
        format!(
            "[{}] {} on {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.theorem,
            self.scenario
        )
    }
}

/// Multiplicative per-unit-tau slack `(1 + BV_SLACK_C / M)^tau` granted to
/// the two-sided derivative-distance band. Calibrated once on the affine
/// benchmark (slope -0.5, M = 200), where the band collapses onto the exact
/// rate and the residual is purely the scheme's first-order bias; measured
/// C = 12.9, frozen at 16 with a 25% safety factor.
pub const BV_SLACK_C: f64 = 16.0;

fn common_snapshots<'a>(
    a: &'a TrajectoryRecord,
    b: &'a TrajectoryRecord,
) -> Result<(usize, &'a [QuantileProfile], &'a [QuantileProfile]), DiagnosticsError> {
    if a.m != b.m {
        return Err(DiagnosticsError::Mismatch);
    }
    let sa = a
        .snapshots()
        .map_err(|_| DiagnosticsError::MissingSnapshots)?;
    let sb = b
        .snapshots()
        .map_err(|_| DiagnosticsError::MissingSnapshots)?;
    Ok((sa.len().min(sb.len()), sa, sb))
}

fn log_slope_first_half(taus: &[f64], values: &[f64]) -> f64 {
    let n = (taus.len() / 2).max(2);
    let pts: Vec<(f64, f64)> = taus[..n]
        .iter()
        .zip(&values[..n])
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    let len = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (len * sxy - sx * sy) / (len * sxx - sx * sx)
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionBand {
    pub fitted_rate: f64,
    pub band: (f64, f64),
    pub taus: Vec<f64>,
    pub distances: Vec<f64>,
    pub pass: bool,
}

impl ContractionBand {
    pub fn report(&self, scenario: &str) -> TheoremReport {
        TheoremReport {
            theorem: "bv-contraction-band".into(),
            scenario: scenario.into(),
            measured: vec![
                ("fitted_rate".into(), self.fitted_rate),
                ("d0".into(), self.distances[0]),
                ("d_end".into(), *self.distances.last().unwrap()),
            ],
            bounds: vec![("k_min".into(), self.band.0), ("k_max".into(), self.band.1)],
            pass: self.pass,
            tolerance: BV_SLACK_C,
        }
    }
}

/// Two-sided exponential band for the derivative distance between two runs:
/// `e^{k_min tau} D(0) <= D(tau) <= e^{k_max tau} D(0)` within the frozen
/// multiplicative grid slack.
pub fn contraction_band(
    a: &TrajectoryRecord,
    b: &TrajectoryRecord,
    k: &PhaseResponse,
) -> Result<ContractionBand, DiagnosticsError> {
    let (n, sa, sb) = common_snapshots(a, b)?;
    let consts = k.constants()?;
    let mut taus = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for i in 0..n {
        taus.push(a.rows[i].tau);
        distances.push(quantile::bv_distance(&sa[i], &sb[i])?);
    }
    let d0 = distances[0];
    if d0 < 1e-12 {
        return Err(DiagnosticsError::DegenerateDistance);
    }
    let slack = 1.0 + BV_SLACK_C / a.m as f64;
    let mut pass = true;
    for (tau, d) in taus.iter().zip(&distances) {
        let grid = slack.powf(*tau);
        let lower = (consts.k_min * tau).exp() * d0 / grid;
        let upper = (consts.k_max * tau).exp() * d0 * grid;
        if *d < lower || *d > upper {
            pass = false;
        }
    }
    let fitted_rate = log_slope_first_half(&taus, &distances);
    Ok(ContractionBand {
        fitted_rate,
        band: (consts.k_min, consts.k_max),
        taus,
        distances,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct L2RateCheck {
    pub slope: f64,
    pub max_relative_error: f64,
    pub pass: bool,
    pub rel_tol: f64,
}

impl L2RateCheck {
    pub fn report(&self, scenario: &str) -> TheoremReport {
        TheoremReport {
            theorem: "affine-l2-exact-rate".into(),
            scenario: scenario.into(),
            measured: vec![
                ("slope".into(), self.slope),
                ("max_relative_error".into(), self.max_relative_error),
            ],
            bounds: vec![("rel_tol".into(), self.rel_tol)],
            pass: self.pass,
            tolerance: self.rel_tol,
        }
    }
}

/// For affine K the centered-L2 distance obeys `D(tau) = e^{k tau} D(0)`
/// exactly; check the relative deviation over all common snapshots.
pub fn l2_rate_check(
    a: &TrajectoryRecord,
    b: &TrajectoryRecord,
    k: &PhaseResponse,
    rel_tol: f64,
) -> Result<L2RateCheck, DiagnosticsError> {
    let slope = match k.form() {
        PhaseResponseForm::Affine { k: slope, .. } => *slope,
        _ => return Err(DiagnosticsError::NotAffine),
    };
    let (n, sa, sb) = common_snapshots(a, b)?;
    let mut d0 = 0.0;
    let mut max_rel = 0.0_f64;
    for i in 0..n {
        let d = quantile::modified_l2_distance(&sa[i], &sb[i])?;
        if i == 0 {
            d0 = d;
            if d0 < 1e-12 {
                return Err(DiagnosticsError::DegenerateDistance);
            }
            continue;
        }
        let tau = a.rows[i].tau;
        let expected = d0 * (slope * tau).exp();
        max_rel = max_rel.max((d - expected).abs() / expected);
    }
    Ok(L2RateCheck {
        slope,
        max_relative_error: max_rel,
        pass: max_rel <= rel_tol,
        rel_tol,
    })
}

/// Moment weight used by [`moment_series`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    /// m(phi) = phi, the mean phase.
    Identity,
    /// m(phi) = integral of 1/K up to phi.
    InverseK,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentSeries {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    /// Right-hand side of the moment identity at each snapshot.
    pub rhs: Vec<f64>,
    /// |central-difference d/dtau of the series - rhs| at interior snapshots.
    pub identity_residuals: Vec<f64>,
}

impl MomentSeries {
    pub fn max_identity_residual(&self) -> f64 {
        self.identity_residuals.iter().cloned().fold(0.0, f64::max)
    }
}

fn moment_weight_values(
    q: &[f64],
    k: &PhaseResponse,
    kind: MomentKind,
) -> Result<Vec<f64>, DiagnosticsError> {
    match kind {
        MomentKind::Identity => Ok(q.to_vec()),
        MomentKind::InverseK => {
            // Cumulative Simpson over the sorted node values.
            let mut out = Vec::with_capacity(q.len());
            let mut acc = simpson_inv_k(k, 0.0, q[0]);
            out.push(acc);
            for w in q.windows(2) {
                acc += simpson_inv_k(k, w[0], w[1]);
                out.push(acc);
            }
            Ok(out)
        }
    }
}

fn simpson_inv_k(k: &PhaseResponse, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    (b - a) / 6.0 * (1.0 / k.k(a) + 4.0 / k.k(mid) + 1.0 / k.k(b))
}

/// Series of the moment `int m(Q) deta` along a trajectory plus the residual
/// of its evolution identity
/// `d/dtau int m(Q) = (int m'(Q) K(Q) - m(phi_f)) + n_tilde int m'(Q)`.
pub fn moment_series(
    traj: &TrajectoryRecord,
    k: &PhaseResponse,
    kind: MomentKind,
) -> Result<MomentSeries, DiagnosticsError> {
    let snaps = traj
        .snapshots()
        .map_err(|_| DiagnosticsError::MissingSnapshots)?;
    let m_phi_f = match kind {
        MomentKind::Identity => traj.phi_f,
        MomentKind::InverseK => k.constants()?.harmonic_integral,
    };
    let mut taus = Vec::new();
    let mut values = Vec::new();
    let mut rhs = Vec::new();
    for (row, snap) in traj.rows.iter().zip(snaps) {
        let q = snap.q();
        let weights = moment_weight_values(q, k, kind)?;
        values.push(quantile::trapezoid(&weights));
        let mprime_k: Vec<f64> = q
            .iter()
            .map(|&phi| match kind {
                MomentKind::Identity => k.k(phi),
                MomentKind::InverseK => 1.0,
            })
            .collect();
        let mprime: Vec<f64> = q
            .iter()
            .map(|&phi| match kind {
                MomentKind::Identity => 1.0,
                MomentKind::InverseK => 1.0 / k.k(phi),
            })
            .collect();
        rhs.push(
            quantile::trapezoid(&mprime_k) - m_phi_f + row.n_tilde * quantile::trapezoid(&mprime),
        );
        taus.push(row.tau);
    }
    let dt = traj.dtau();
    let mut identity_residuals = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        let deriv = (values[i + 1] - values[i - 1]) / (2.0 * dt);
        identity_residuals.push((deriv - rhs[i]).abs());
    }
    Ok(MomentSeries {
        taus,
        values,
        rhs,
        identity_residuals,
    })
}

/// One a-priori blow-up bound, its applicability and its verdict against a
/// measured trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub applicable: bool,
    pub detail: String,
    /// Upper bound on tau* for time bounds; right-hand side for inequality
    /// bounds.
    pub bound: Option<f64>,
    pub measured: Option<f64>,
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupBounds {
    pub checks: Vec<BoundCheck>,
    pub tau_star: Option<f64>,
}

impl BlowupBounds {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds != Some(false))
    }

    pub fn report(&self, scenario: &str) -> TheoremReport {
        let mut measured = Vec::new();
        let mut bounds = Vec::new();
        if let Some(ts) = self.tau_star {
            measured.push(("tau_star".into(), ts));
        }
        for c in &self.checks {
            if let (true, Some(b)) = (c.applicable, c.bound) {
                bounds.push((c.name.clone(), b));
            }
            if let Some(m) = c.measured {
                measured.push((format!("{}_measured", c.name), m));
            }
        }
        TheoremReport {
            theorem: "blowup-bounds".into(),
            scenario: scenario.into(),
            measured,
            bounds,
            pass: self.all_hold(),
            tolerance: 0.0,
        }
    }
}

/// Emit every applicable a-priori blow-up bound for this response function
/// and initial profile, and verify each against the recorded run when one is
/// supplied. Time bounds get an additive `2 dtau` discretization slack, the
/// moment inequalities a `5 dtau` slack.
pub fn blowup_bounds(
    k: &PhaseResponse,
    q_init: &QuantileProfile,
    traj: Option<&TrajectoryRecord>,
) -> Result<BlowupBounds, DiagnosticsError> {
    let consts = k.constants()?;
    let phi_f = k.phi_f();
    let hi = consts.harmonic_integral;
    let strong_coupling = hi <= 1.0 + 1e-9;
    let tau_star = traj.and_then(|t| match t.outcome {
        RunOutcome::BlownUp { tau_star, .. } => Some(tau_star),
        RunOutcome::RelaxedContinued { tau_star, .. } => Some(tau_star),
        RunOutcome::Completed => None,
    });
    let dt = traj.map(|t| t.dtau()).unwrap_or(0.0);
    let elapsed_t = traj.map(|t| t.integral_n_tilde());
    let mut checks = Vec::new();

    // Characteristics bound: tau* <= harmonic integral when it is <= 1.
    if strong_coupling {
        let holds = tau_star.map(|ts| ts <= hi + 2.0 * dt);
        checks.push(BoundCheck {
            name: "characteristics".into(),
            applicable: true,
            detail: format!("harmonic integral {hi:.6} <= 1"),
            bound: Some(hi),
            measured: tau_star,
            holds,
        });
    } else {
        checks.push(BoundCheck {
            name: "characteristics".into(),
            applicable: false,
            detail: format!("harmonic integral {hi:.6} > 1"),
            bound: None,
            measured: None,
            holds: None,
        });
    }

    // First-moment inequality, strong coupling only:
    // (min K - phi_f) tau* + int n_tilde <= phi_f - int Q_init.
    if strong_coupling {
        let rhs = phi_f - quantile::trapezoid(q_init.q());
        let measured = match (tau_star, elapsed_t) {
            (Some(ts), Some(et)) => Some((consts.k_min_val - phi_f) * ts + et),
            _ => None,
        };
        let holds = measured.map(|lhs| lhs <= rhs + 5.0 * dt * consts.k_min_val.max(1.0));
        checks.push(BoundCheck {
            name: "moment_identity".into(),
            applicable: true,
            detail: "first-moment inequality".into(),
            bound: Some(rhs),
            measured,
            holds,
        });

        // Second variant with the 1/K antiderivative as weight.
        let m_init = moment_weight_values(q_init.q(), k, MomentKind::InverseK)?;
        let rhs2 = hi - quantile::trapezoid(&m_init);
        let measured2 = match (tau_star, elapsed_t) {
            (Some(ts), Some(et)) => Some((1.0 - hi) * ts + et / consts.k_max_val),
            _ => None,
        };
        let holds2 = measured2.map(|lhs| lhs <= rhs2 + 5.0 * dt);
        checks.push(BoundCheck {
            name: "moment_inverse_k".into(),
            applicable: true,
            detail: "harmonic-weight moment inequality".into(),
            bound: Some(rhs2),
            measured: measured2,
            holds: holds2,
        });
    } else {
        for name in ["moment_identity", "moment_inverse_k"] {
            checks.push(BoundCheck {
                name: name.into(),
                applicable: false,
                detail: format!("harmonic integral {hi:.6} > 1"),
                bound: None,
                measured: None,
                holds: None,
            });
        }
    }

    // Expansion bound against the steady profile: needs k_min > 0 and a
    // steady state to exist.
    if consts.k_min > 0.0 && hi > 1.0 + 1e-9 {
        let star = steady_state::solve(k, q_init.grid_size())?;
        let d0 = quantile::bv_distance(q_init, &star.profile)?;
        if d0 > 1e-12 {
            let bound = (2.0 * phi_f / d0).ln() / consts.k_min;
            let holds = tau_star.map(|ts| ts <= bound + 2.0 * dt);
            checks.push(BoundCheck {
                name: "bv_expansion".into(),
                applicable: true,
                detail: format!("k_min = {:.4} > 0, steady state exists", consts.k_min),
                bound: Some(bound),
                measured: tau_star,
                holds,
            });
        } else {
            checks.push(BoundCheck {
                name: "bv_expansion".into(),
                applicable: false,
                detail: "initial data coincides with the steady state".into(),
                bound: None,
                measured: None,
                holds: None,
            });
        }
    } else {
        checks.push(BoundCheck {
            name: "bv_expansion".into(),
            applicable: false,
            detail: format!(
                "k_min = {:.4}, harmonic integral = {hi:.4}; needs k_min > 0 and a steady state",
                consts.k_min
            ),
            bound: None,
            measured: None,
            holds: None,
        });
    }

    if checks.iter().all(|c| !c.applicable) {
        return Err(DiagnosticsError::InapplicableBound(
            checks
                .iter()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    Ok(BlowupBounds { checks, tau_star })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundedBvCheck {
    pub max_distance: f64,
    pub cap: f64,
    pub pass: bool,
}

impl BoundedBvCheck {
    pub fn report(&self, scenario: &str) -> TheoremReport {
        TheoremReport {
            theorem: "bv-uniform-bound".into(),
            scenario: scenario.into(),
            measured: vec![("max_distance".into(), self.max_distance)],
            bounds: vec![("cap".into(), self.cap)],
            pass: self.pass,
            tolerance: 0.0,
        }
    }
}

/// The derivative distance between any two boundary-consistent runs never
/// exceeds `2 phi_f (1 + 1/M)`.
pub fn bounded_bv_check(
    a: &TrajectoryRecord,
    b: &TrajectoryRecord,
) -> Result<BoundedBvCheck, DiagnosticsError> {
    let (n, sa, sb) = common_snapshots(a, b)?;
    let mut max_distance = 0.0_f64;
    for i in 0..n {
        max_distance = max_distance.max(quantile::bv_distance(&sa[i], &sb[i])?);
    }
    let cap = 2.0 * a.phi_f * (1.0 + 1.0 / a.m as f64);
    Ok(BoundedBvCheck {
        max_distance,
        cap,
        pass: max_distance <= cap,
    })
}

/// Structural per-step invariants of a recorded run: boundary pin, first-order
/// compatibility residual, and (original mode) monotonicity with non-negative
/// derivative.
#[derive(Debug, Clone, Serialize)]
pub struct StructuralCheck {
    pub max_res_boundary: f64,
    pub max_res_compat: f64,
    pub monotone_everywhere: bool,
    pub min_z: f64,
    pub pass: bool,
}

pub fn structural_check(
    traj: &TrajectoryRecord,
    newton_tol: f64,
) -> Result<StructuralCheck, DiagnosticsError> {
    let mut max_res_boundary = 0.0_f64;
    let mut max_res_compat = 0.0_f64;
    let mut min_z = f64::INFINITY;
    // Row 0 is the initial datum, whose compatibility is only required to
    // the validation tolerance; the per-step bounds apply to solver steps.
    for row in traj.rows.iter().skip(1) {
        max_res_boundary = max_res_boundary.max(row.res_boundary);
        max_res_compat = max_res_compat.max(row.res_compat);
        min_z = min_z.min(row.min_z);
    }
    if traj.rows.len() <= 1 {
        min_z = traj.rows[0].min_z;
    }
    let monotone_everywhere = match traj.snapshots() {
        Ok(snaps) => snaps.iter().all(|s| s.is_monotone()),
        Err(_) => true,
    };
    let original = traj.mode == crate::meanfield::RunMode::Original;
    let pass = max_res_boundary <= newton_tol
        && max_res_compat <= 10.0 * newton_tol
        && (!original || (monotone_everywhere && min_z >= -1e-12));
    Ok(StructuralCheck {
        max_res_boundary,
        max_res_compat,
        monotone_everywhere,
        min_z,
        pass,
    })
}

/// Quadrature reuse for external callers that need `int_0^phi 1/K`.
pub fn inverse_k_antiderivative(k: &PhaseResponse, phi: f64) -> Result<f64, DiagnosticsError> {
    Ok(quad::adaptive_simpson(
        |p| 1.0 / k.k(p),
        0.0,
        phi,
        quad::DEFAULT_TOL,
        quad::DEFAULT_BUDGET,
    )
    .map_err(PhaseResponseError::from)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial;
    use crate::meanfield::{self, MeanFieldState, RunMode, SolverConfig, StepRow};
    use crate::quantile::QuantileProfile;

    fn affine(k: f64, b: f64) -> PhaseResponse {
        PhaseResponse::new(PhaseResponseForm::Affine { k, b }, 1.0).unwrap()
    }

    fn run_from(
        p: QuantileProfile,
        k: &PhaseResponse,
        tau_end: f64,
        mode: RunMode,
    ) -> TrajectoryRecord {
        let cfg = SolverConfig::for_grid(p.grid_size());
        let (state, _) = MeanFieldState::from_profile(p, k, mode).unwrap();
        meanfield::run(state, tau_end, k, &cfg).unwrap()
    }

    #[test]
    fn identical_runs_are_degenerate() {
        let k = affine(0.0, 0.5);
        let p = initial::sine_compatible(&k, 64, 1.2).unwrap();
        let t1 = run_from(p.clone(), &k, 0.5, RunMode::Original);
        let t2 = run_from(p, &k, 0.5, RunMode::Original);
        assert!(matches!(
            contraction_band(&t1, &t2, &k),
            Err(DiagnosticsError::DegenerateDistance)
        ));
    }

    #[test]
    fn l2_rate_requires_affine_response() {
        let k = PhaseResponse::new(
            PhaseResponseForm::Quadratic {
                c0: 1.2,
                c1: -0.4,
                c2: -0.1,
            },
            1.0,
        )
        .unwrap();
        let p1 = initial::sine_compatible(&k, 64, 0.75).unwrap();
        let p2 = initial::sine_compatible(&k, 64, 0.76).unwrap();
        let t1 = run_from(p1, &k, 0.5, RunMode::Original);
        let t2 = run_from(p2, &k, 0.5, RunMode::Original);
        assert!(matches!(
            l2_rate_check(&t1, &t2, &k, 1e-3),
            Err(DiagnosticsError::NotAffine)
        ));
    }

    #[test]
    fn constant_k_keeps_l2_distance_constant() {
        let k = affine(0.0, 0.5);
        let p1 = initial::sine_compatible(&k, 100, 1.2).unwrap();
        let p2 = initial::sine_compatible(&k, 100, 1.3).unwrap();
        let t1 = run_from(p1, &k, 2.0, RunMode::Original);
        let t2 = run_from(p2, &k, 2.0, RunMode::Original);
        let check = l2_rate_check(&t1, &t2, &k, 1e-6).unwrap();
        assert!(check.pass, "relative drift {}", check.max_relative_error);
    }

    #[test]
    fn expanding_affine_rate_holds_until_blowup() {
        // Positive slope: distance grows at exactly e^{0.5 tau} while both
        // runs exist; the runs stop at their blow-up times.
        let k = affine(0.5, 0.3);
        let p1 = initial::sine_compatible(&k, 100, 1.0).unwrap();
        let p2 = initial::sine_compatible(&k, 100, 1.05).unwrap();
        let t1 = run_from(p1, &k, 10.0, RunMode::Original);
        let t2 = run_from(p2, &k, 10.0, RunMode::Original);
        let check = l2_rate_check(&t1, &t2, &k, 1e-6).unwrap();
        assert!(check.pass, "relative drift {}", check.max_relative_error);
        assert_eq!(check.slope, 0.5);
    }

    #[test]
    fn moment_series_constant_on_steady_state() {
        let k = affine(0.0, 0.5);
        let m = 64;
        let q: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
        let p = QuantileProfile::from_parts(q, vec![1.0; m + 1]).unwrap();
        let traj = run_from(p, &k, 2.0, RunMode::Original);
        for kind in [MomentKind::Identity, MomentKind::InverseK] {
            let series = moment_series(&traj, &k, kind).unwrap();
            let drift = series
                .values
                .iter()
                .map(|v| (v - series.values[0]).abs())
                .fold(0.0_f64, f64::max);
            assert!(drift < 1e-9, "drift {drift}");
            assert!(series.max_identity_residual() < 1e-8);
            // RHS of the identity vanishes at stationarity.
            assert!(series.rhs.iter().all(|r| r.abs() < 1e-9));
        }
        // Uniform profile: mean phase is phi_f / 2; the inverse-K weight for
        // constant K is phi / b.
        let id = moment_series(&traj, &k, MomentKind::Identity).unwrap();
        assert!((id.values[0] - 0.5).abs() < 1e-12);
        let inv = moment_series(&traj, &k, MomentKind::InverseK).unwrap();
        assert!((inv.values[0] - 0.5 / 0.5).abs() < 1e-9);
    }

    #[test]
    fn moment_identity_tracks_moving_profile() {
        let k = affine(-0.5, 1.0);
        let p = initial::sine_compatible(&k, 200, 0.8).unwrap();
        let traj = run_from(p, &k, 2.0, RunMode::Original);
        let series = moment_series(&traj, &k, MomentKind::Identity).unwrap();
        // Residual is O(dtau + 1/M).
        assert!(series.max_identity_residual() < 5.0 / 200.0);
    }

    #[test]
    fn no_applicable_bound_is_an_error() {
        // Harmonic integral 2 > 1 and k_min = 0: nothing applies.
        let k = affine(0.0, 0.5);
        let m = 64;
        let q: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
        let p = QuantileProfile::from_parts(q, vec![1.0; m + 1]).unwrap();
        assert!(matches!(
            blowup_bounds(&k, &p, None),
            Err(DiagnosticsError::InapplicableBound(_))
        ));
    }

    #[test]
    fn strong_coupling_bounds_without_trajectory() {
        let k = affine(0.0, 2.0);
        let p = initial::sine_compatible(&k, 64, 2.5).unwrap();
        let bounds = blowup_bounds(&k, &p, None).unwrap();
        let chars = bounds
            .checks
            .iter()
            .find(|c| c.name == "characteristics")
            .unwrap();
        assert!(chars.applicable);
        assert!((chars.bound.unwrap() - 0.5).abs() < 1e-9);
        // No run supplied: bounds are emitted but not verified.
        assert!(chars.holds.is_none());
        assert!(bounds.all_hold());
    }

    fn synthetic_record(z_value: f64, phi_f: f64, m: usize) -> TrajectoryRecord {
        let q: Vec<f64> = (0..=m).map(|j| phi_f * j as f64 / m as f64).collect();
        let profile = QuantileProfile::from_parts(q, vec![z_value; m + 1]).unwrap();
        TrajectoryRecord {
            rows: vec![StepRow {
                step: 0,
                tau: 0.0,
                t: 0.0,
                n_tilde: 1.0,
                min_z: z_value,
                max_z: z_value,
                res_compat: 0.0,
                res_boundary: 0.0,
                n_tilde_cross_gap: 0.0,
            }],
            snapshots: Some(vec![profile]),
            outcome: RunOutcome::Completed,
            h_init: vec![1.0; m + 1],
            left_physical_domain: false,
            mode: crate::meanfield::RunMode::Original,
            phi_f,
            m,
        }
    }

    #[test]
    fn bv_cap_negative_control() {
        // Non-boundary-consistent synthetic profiles can exceed the cap,
        // which proves the check is live.
        let a = synthetic_record(0.0, 1.0, 32);
        let b = synthetic_record(3.0, 1.0, 32);
        let check = bounded_bv_check(&a, &b).unwrap();
        assert!(!check.pass, "cap check failed to fire: {check:?}");
        // And it passes on itself.
        let same = bounded_bv_check(&a, &a).unwrap();
        assert!(same.pass);
        assert_eq!(same.max_distance, 0.0);
    }

    #[test]
    fn inverse_k_antiderivative_matches_constant_k() {
        let k = affine(0.0, 0.5);
        let v = inverse_k_antiderivative(&k, 1.0).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }
}
