//! Semi-Lagrangian solver for the quantile transport system on the dilated
//! timescale.
//!
//! The state is a profile `Q(tau, eta)` on the unit-CFL grid
//! `dtau = deta = 1/M`, so the characteristics of `d_tau + d_eta` land
//! exactly on nodes and transport is an index shift plus a source integral.
//! Each step determines the multiplier `n_tilde = 1/N` implicitly as the
//! scalar root that carries the second-to-last node exactly onto `phi_f`;
//! the derivative `Z` rides along each characteristic with its exact
//! exponential growth factor. In original mode the run stops when the
//! multiplier root drops to the blow-up threshold; in relaxed mode it
//! continues through zero and the profile is allowed to lose monotonicity.

use serde::Serialize;
use thiserror::Error;

use crate::phase_response::PhaseResponse;
use crate::quantile::QuantileProfile;

#[derive(Debug, Error)]
pub enum MeanFieldError {
    #[error("boundary slope Z_M = {z_m} does not exceed K(phi_f) = {k_phi_f}; the firing rate is not positive")]
    ConstraintViolated { z_m: f64, k_phi_f: f64 },
    #[error("initial data incompatible with the boundary conditions: Z_M - Z_0 = {gap}, K(phi_f) - K(0) = {expected} (tolerance {tol:e}); the mismatch would propagate as a derivative discontinuity")]
    CompatibilityViolated { gap: f64, expected: f64, tol: f64 },
    #[error("firing-rate root solve failed: {0}")]
    RootFindFailed(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error(
        "trajectory does not store the per-step snapshots needed for the kernel recomputation"
    )]
    InsufficientHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Stop when the firing rate blows up (`n_tilde` reaches the threshold).
    Original,
    /// Continue through `n_tilde <= 0`; non-physical past the zero crossing.
    Relaxed,
}

/// Solver parameters. `m` fixes both grid spacings (`dtau = deta = 1/m`).
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub m: usize,
    /// Tolerance on `|Q_M - phi_f|` for the per-step multiplier root.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// `n_tilde` at or below this value counts as blow-up in original mode.
    pub blowup_eps: f64,
    pub max_steps: usize,
    /// Keep a profile snapshot at every step (needed by the kernel
    /// recomputation and the trajectory diagnostics).
    pub store_profiles: bool,
}

impl SolverConfig {
    pub fn for_grid(m: usize) -> Self {
        assert!(m >= 8, "grid too coarse");
        SolverConfig {
            m,
            newton_tol: 1e-12,
            newton_max_iter: 60,
            blowup_eps: 1e-8,
            max_steps: 200_000,
            store_profiles: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeanFieldState {
    pub tau: f64,
    /// Physical time accumulated via `dt = n_tilde * dtau`; flagged
    /// non-physical once `n_tilde <= 0` in relaxed runs.
    pub t: f64,
    pub profile: QuantileProfile,
    pub n_tilde: f64,
    pub mode: RunMode,
}

/// Per-step scalar diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepRow {
    pub step: usize,
    pub tau: f64,
    pub t: f64,
    pub n_tilde: f64,
    pub min_z: f64,
    pub max_z: f64,
    /// `|Z_M - Z_0 - (K(phi_f) - K(0))|` on the stored profile.
    pub res_compat: f64,
    /// `|Q_M - phi_f|` left by the multiplier root solve.
    pub res_boundary: f64,
    /// Gap between the implicit multiplier and the explicit one read off the
    /// transported boundary derivative; a scheme-consistency cross-check, not
    /// part of the dynamics.
    pub n_tilde_cross_gap: f64,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunOutcome {
    Completed,
    BlownUp { tau_star: f64, t_star: f64 },
    RelaxedContinued { tau_star: f64, t_star: f64 },
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub rows: Vec<StepRow>,
    /// One profile per row when `store_profiles` is set.
    pub snapshots: Option<Vec<QuantileProfile>>,
    pub outcome: RunOutcome,
    /// H = Z - K(Q) of the initial profile.
    pub h_init: Vec<f64>,
    /// Set when some node value left `[0, phi_f]`, i.e. the smooth extension
    /// of K carried part of the dynamics (relaxed continuations past the
    /// zero crossing do this).
    pub left_physical_domain: bool,
    pub mode: RunMode,
    pub phi_f: f64,
    pub m: usize,
}

impl TrajectoryRecord {
    pub fn dtau(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn snapshots(&self) -> Result<&[QuantileProfile], MeanFieldError> {
        self.snapshots
            .as_deref()
            .ok_or(MeanFieldError::InsufficientHistory)
    }

    /// Trapezoid integral of `n_tilde` over the recorded interval, i.e. the
    /// elapsed physical time.
    pub fn integral_n_tilde(&self) -> f64 {
        let dt = self.dtau();
        let mut acc = 0.0;
        for w in self.rows.windows(2) {
            acc += 0.5 * dt * (w[0].n_tilde + w[1].n_tilde);
        }
        acc
    }

    /// Profile interpolated linearly in physical time `t`. Only meaningful
    /// while `t` is increasing (original-mode runs).
    pub fn profile_at_time(&self, t: f64) -> Result<QuantileProfile, MeanFieldError> {
        let snaps = self.snapshots()?;
        let rows = &self.rows;
        if t <= rows[0].t {
            return Ok(snaps[0].clone());
        }
        for i in 0..rows.len() - 1 {
            if rows[i + 1].t >= t {
                let span = rows[i + 1].t - rows[i].t;
                let w = if span > 0.0 {
                    (t - rows[i].t) / span
                } else {
                    0.0
                };
                let q: Vec<f64> = snaps[i]
                    .q()
                    .iter()
                    .zip(snaps[i + 1].q())
                    .map(|(a, b)| a * (1.0 - w) + b * w)
                    .collect();
                let z: Vec<f64> = snaps[i]
                    .z()
                    .iter()
                    .zip(snaps[i + 1].z())
                    .map(|(a, b)| a * (1.0 - w) + b * w)
                    .collect();
                return Ok(QuantileProfile::from_parts(q, z)
                    .expect("interpolant of valid profiles is valid"));
            }
        }
        Ok(snaps[snaps.len() - 1].clone())
    }
}

/// Validate initial data and return its firing rate `N_init` together with
/// non-fatal warnings.
///
/// Checks, in order: profile shape (boundary values and monotonicity), the
/// firing-rate constraint `Z_M > K(phi_f)`, and first-order compatibility
/// `Z_M - Z_0 = K(phi_f) - K(0)` to `1e-6 * phi_f`.
pub fn validate_initial(
    profile: &QuantileProfile,
    k: &PhaseResponse,
) -> Result<(f64, Vec<String>), MeanFieldError> {
    let phi_f = k.phi_f();
    let m = profile.grid_size();
    let q = profile.q();
    let z = profile.z();
    if q[0].abs() > 1e-9 * phi_f {
        return Err(MeanFieldError::InvalidProfile(format!(
            "Q(0) = {} must be 0",
            q[0]
        )));
    }
    if (q[m] - phi_f).abs() > 1e-9 * phi_f {
        return Err(MeanFieldError::InvalidProfile(format!(
            "Q(1) = {} must equal phi_f = {phi_f}",
            q[m]
        )));
    }
    if !profile.is_monotone() {
        return Err(MeanFieldError::InvalidProfile(
            "Q must be non-decreasing".into(),
        ));
    }
    let k_end = k.k(phi_f);
    if z[m] <= k_end {
        return Err(MeanFieldError::ConstraintViolated {
            z_m: z[m],
            k_phi_f: k_end,
        });
    }
    let expected = k_end - k.k(0.0);
    let gap = z[m] - z[0];
    let tol = 1e-6 * phi_f;
    if (gap - expected).abs() > tol {
        return Err(MeanFieldError::CompatibilityViolated { gap, expected, tol });
    }
    let mut warnings = Vec::new();
    if z.iter().any(|v| *v <= 0.0) {
        warnings.push("initial Z touches zero; the data is not solver-grade strict".into());
    }
    let h_min = (0..=m)
        .map(|j| z[j] - k.k(q[j]))
        .fold(f64::INFINITY, f64::min);
    if h_min <= 0.0 {
        warnings.push(format!(
            "H_init = Z - K(Q) dips to {h_min:.3e}; global firing-rate bounds do not apply"
        ));
    }
    Ok((1.0 / (z[m] - k_end), warnings))
}

impl MeanFieldState {
    /// Wrap validated initial data into a state at `tau = t = 0`.
    pub fn from_profile(
        profile: QuantileProfile,
        k: &PhaseResponse,
        mode: RunMode,
    ) -> Result<(Self, Vec<String>), MeanFieldError> {
        let (n_init, warnings) = validate_initial(&profile, k)?;
        Ok((
            MeanFieldState {
                tau: 0.0,
                t: 0.0,
                n_tilde: 1.0 / n_init,
                profile,
                mode,
            },
            warnings,
        ))
    }
}

/// Result of integrating one characteristic over a step.
struct CharStep {
    q_end: f64,
    /// Simpson value of the integral of K'(q(s)) along the path.
    kprime_integral: f64,
    /// Sensitivity of `q_end` to the multiplier (variational equation).
    dq_dn: f64,
}

/// Integrate `dq/ds = K(q) + n` over `[0, dt]` with two RK4 half-steps,
/// carrying the sensitivity `dv/ds = K'(q) v + 1` alongside when requested.
fn characteristic_step(k: &PhaseResponse, q0: f64, n: f64, dt: f64, with_sens: bool) -> CharStep {
    let h = 0.5 * dt;
    let mut q = q0;
    let mut v = 0.0;
    let mut mid = q0;
    for half in 0..2 {
        let f = |q: f64| k.k(q) + n;
        let (k1, k2, k3, k4);
        let (v1, v2, v3, v4);
        k1 = f(q);
        v1 = if with_sens { k.k1(q) * v + 1.0 } else { 0.0 };
        let q2 = q + 0.5 * h * k1;
        k2 = f(q2);
        v2 = if with_sens {
            k.k1(q2) * (v + 0.5 * h * v1) + 1.0
        } else {
            0.0
        };
        let q3 = q + 0.5 * h * k2;
        k3 = f(q3);
        v3 = if with_sens {
            k.k1(q3) * (v + 0.5 * h * v2) + 1.0
        } else {
            0.0
        };
        let q4 = q + h * k3;
        k4 = f(q4);
        v4 = if with_sens {
            k.k1(q4) * (v + h * v3) + 1.0
        } else {
            0.0
        };
        q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if with_sens {
            v += h / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
        }
        if half == 0 {
            mid = q;
        }
    }
    // Simpson on the endpoint/midpoint/endpoint of the step path.
    let kprime_integral = dt / 6.0 * (k.k1(q0) + 4.0 * k.k1(mid) + k.k1(q));
    CharStep {
        q_end: q,
        kprime_integral,
        dq_dn: v,
    }
}

/// Solve for the step multiplier: the root of
/// `g(n) = Flow_dt(q_top; n) - phi_f`, which is strictly increasing in `n`.
/// Safeguarded Newton inside a sign-changing bracket grown geometrically from
/// the previous multiplier.
fn solve_multiplier(
    k: &PhaseResponse,
    q_top: f64,
    n_prev: f64,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<f64, MeanFieldError> {
    let phi_f = k.phi_f();
    let g = |n: f64| characteristic_step(k, q_top, n, dt, false).q_end - phi_f;
    let mut half_width = 10.0 * dt * n_prev.abs() + 1.0;
    let (mut lo, mut hi) = (n_prev - half_width, n_prev + half_width);
    let mut expansions = 0;
    while g(lo) > 0.0 || g(hi) < 0.0 {
        expansions += 1;
        if expansions > 60 {
            return Err(MeanFieldError::RootFindFailed(format!(
                "no sign change in [{lo}, {hi}] after {expansions} expansions"
            )));
        }
        half_width *= 2.0;
        lo = n_prev - half_width;
        hi = n_prev + half_width;
    }
    let mut x = n_prev.clamp(lo, hi);
    for _ in 0..cfg.newton_max_iter {
        let cs = characteristic_step(k, q_top, x, dt, true);
        let gx = cs.q_end - phi_f;
        if gx.abs() <= cfg.newton_tol {
            return Ok(x);
        }
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - gx / cs.dq_dn;
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    // Bisection fallback keeps the bracket guarantee.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() <= cfg.newton_tol {
            return Ok(mid);
        }
        if gm > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(MeanFieldError::RootFindFailed(format!(
        "bracket [{lo}, {hi}] did not reach tolerance {:e}",
        cfg.newton_tol
    )))
}

pub enum StepOutcome {
    Advanced {
        state: MeanFieldState,
        /// Gap between the implicit multiplier and the explicit one read off
        /// the transported boundary derivative.
        cross_gap: f64,
    },
    /// Original mode only: the multiplier root fell to the blow-up threshold;
    /// the state was not advanced.
    BlowUp { n_root: f64 },
}

/// Advance one step of size `dtau = 1/M`.
pub fn step(
    state: &MeanFieldState,
    k: &PhaseResponse,
    cfg: &SolverConfig,
) -> Result<StepOutcome, MeanFieldError> {
    let m = state.profile.grid_size();
    let dt = 1.0 / m as f64;
    let q = state.profile.q();
    let z = state.profile.z();
    let n_root = solve_multiplier(k, q[m - 1], state.n_tilde, dt, cfg)?;
    if state.mode == RunMode::Original && n_root <= cfg.blowup_eps {
        return Ok(StepOutcome::BlowUp { n_root });
    }
    let mut new_q = vec![0.0; m + 1];
    let mut new_z = vec![0.0; m + 1];
    for j in 0..m {
        let cs = characteristic_step(k, q[j], n_root, dt, false);
        new_q[j + 1] = cs.q_end;
        new_z[j + 1] = z[j] * cs.kprime_integral.exp();
    }
    // Boundary nodes carry their exact identities; the transported top value
    // is kept only as a cross-check of scheme consistency.
    let transported_top = new_z[m];
    new_q[0] = 0.0;
    new_z[0] = n_root + k.k(0.0);
    new_z[m] = n_root + k.k(k.phi_f());
    let mut state_new = state.clone();
    state_new.tau += dt;
    state_new.t += n_root * dt;
    state_new.n_tilde = n_root;
    *state_new.profile.q_mut() = new_q;
    *state_new.profile.z_mut() = new_z;
    let cross_gap = (transported_top - k.k(k.phi_f()) - n_root).abs();
    Ok(StepOutcome::Advanced {
        state: state_new,
        cross_gap,
    })
}

fn make_row(step: usize, state: &MeanFieldState, k: &PhaseResponse, cross_gap: f64) -> StepRow {
    let m = state.profile.grid_size();
    let q = state.profile.q();
    let z = state.profile.z();
    let min_z = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_z = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    StepRow {
        step,
        tau: state.tau,
        t: state.t,
        n_tilde: state.n_tilde,
        min_z,
        max_z,
        res_compat: (z[m] - z[0] - (k.k(k.phi_f()) - k.k(0.0))).abs(),
        res_boundary: (q[m] - k.phi_f()).abs(),
        n_tilde_cross_gap: cross_gap,
    }
}

/// Run until `tau_end`, blow-up (original mode) or the step cap.
pub fn run(
    state: MeanFieldState,
    tau_end: f64,
    k: &PhaseResponse,
    cfg: &SolverConfig,
) -> Result<TrajectoryRecord, MeanFieldError> {
    let m = state.profile.grid_size();
    if m != cfg.m {
        return Err(MeanFieldError::InvalidProfile(format!(
            "profile grid ({m}) does not match solver config ({})",
            cfg.m
        )));
    }
    let dt = 1.0 / m as f64;
    let h_init = h_profile(&state, k);
    let mut rows = vec![make_row(0, &state, k, 0.0)];
    let mut snapshots = cfg.store_profiles.then(|| vec![state.profile.clone()]);
    let mut current = state;
    let mut outcome = RunOutcome::Completed;
    let mut crossing: Option<(f64, f64)> = None;
    let mut steps = 0usize;
    let mut left_physical_domain = false;
    let domain_tol = 1e-12 * k.phi_f();
    while current.tau < tau_end - 1e-12 && steps < cfg.max_steps {
        match step(&current, k, cfg)? {
            StepOutcome::BlowUp { .. } => {
                outcome = RunOutcome::BlownUp {
                    tau_star: current.tau + 0.5 * dt,
                    t_star: current.t + 0.25 * current.n_tilde.max(0.0) * dt,
                };
                break;
            }
            StepOutcome::Advanced {
                state: next,
                cross_gap,
            } => {
                if crossing.is_none() && current.n_tilde > 0.0 && next.n_tilde <= 0.0 {
                    let frac = current.n_tilde / (current.n_tilde - next.n_tilde);
                    crossing = Some((
                        current.tau + frac * dt,
                        current.t + 0.5 * current.n_tilde * frac * dt,
                    ));
                }
                current = next;
                steps += 1;
                if !left_physical_domain {
                    left_physical_domain = current
                        .profile
                        .q()
                        .iter()
                        .any(|&q| q < -domain_tol || q > k.phi_f() + domain_tol);
                }
                rows.push(make_row(steps, &current, k, cross_gap));
                if let Some(s) = snapshots.as_mut() {
                    s.push(current.profile.clone());
                }
            }
        }
    }
    if current.mode == RunMode::Relaxed {
        if let Some((tau_star, t_star)) = crossing {
            outcome = RunOutcome::RelaxedContinued { tau_star, t_star };
        }
    }
    Ok(TrajectoryRecord {
        rows,
        snapshots,
        outcome,
        h_init,
        left_physical_domain,
        mode: current.mode,
        phi_f: k.phi_f(),
        m,
    })
}

/// `H_j = Z_j - K(Q_j)`; both boundary values equal the current multiplier up
/// to the root tolerance.
pub fn h_profile(state: &MeanFieldState, k: &PhaseResponse) -> Vec<f64> {
    state
        .profile
        .q()
        .iter()
        .zip(state.profile.z())
        .map(|(q, z)| z - k.k(*q))
        .collect()
}

/// Residuals of the renewal-type integral equation for the multiplier.
#[derive(Debug, Clone, Serialize)]
pub struct IntegralEquationReport {
    pub taus: Vec<f64>,
    /// `|recomputed - recorded|` multiplier per evaluated tau.
    pub residuals: Vec<f64>,
    /// Quadrature self-check: `|1 - int c - exp(int K' along the diagonal)|`.
    pub identity_residuals: Vec<f64>,
    /// Smallest kernel sample seen; non-negative whenever K' <= 0.
    pub kernel_min: f64,
}

impl IntegralEquationReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// Recompute `n_tilde(tau)` for every recorded `tau > 1` from its integral
/// equation: a convex-type combination of the multiplier history over
/// `[tau - 1, tau]` with kernel `c(tau, s) = -K'(Q(s, 1 - (tau - s)))
/// exp(int_s^tau K'(Q(r, 1 - (tau - r))) dr)` sampled along the grid
/// diagonal, all integrals by trapezoid.
pub fn integral_equation_residual(
    record: &TrajectoryRecord,
    k: &PhaseResponse,
) -> Result<IntegralEquationReport, MeanFieldError> {
    let snaps = record.snapshots()?;
    let m = record.m;
    let dt = record.dtau();
    if record.rows.len() <= m + 1 {
        return Err(MeanFieldError::InsufficientHistory);
    }
    let mut taus = Vec::new();
    let mut residuals = Vec::new();
    let mut identity_residuals = Vec::new();
    let mut kernel_min = f64::INFINITY;
    for step_idx in (m + 1)..record.rows.len() {
        // Diagonal samples: at s = tau_{step-m+i} the foot sits on node i.
        let g: Vec<f64> = (0..=m)
            .map(|i| k.k1(snaps[step_idx - m + i].q()[i]))
            .collect();
        // Suffix trapezoid integrals of K' along the diagonal.
        let mut suffix = vec![0.0; m + 1];
        for i in (0..m).rev() {
            suffix[i] = suffix[i + 1] + 0.5 * dt * (g[i] + g[i + 1]);
        }
        let c: Vec<f64> = (0..=m).map(|i| -g[i] * suffix[i].exp()).collect();
        kernel_min = c.iter().cloned().fold(kernel_min, f64::min);
        let mut c_int = 0.0;
        let mut cn_int = 0.0;
        for i in 0..m {
            let n_a = record.rows[step_idx - m + i].n_tilde;
            let n_b = record.rows[step_idx - m + i + 1].n_tilde;
            c_int += 0.5 * dt * (c[i] + c[i + 1]);
            cn_int += 0.5 * dt * (c[i] * n_a + c[i + 1] * n_b);
        }
        let recomputed = (1.0 - c_int) * record.rows[step_idx - m].n_tilde + cn_int;
        taus.push(record.rows[step_idx].tau);
        residuals.push((recomputed - record.rows[step_idx].n_tilde).abs());
        identity_residuals.push(((1.0 - c_int) - suffix[0].exp()).abs());
    }
    Ok(IntegralEquationReport {
        taus,
        residuals,
        identity_residuals,
        kernel_min,
    })
}
