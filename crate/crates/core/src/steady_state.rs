//! Steady-state existence and shooting construction.
//!
//! A stationary profile solves `dQ*/deta = K(Q*) + 1/N*` with `Q*(0) = 0`,
//! `Q*(1) = phi_f`. Existence reduces to the harmonic integral of `1/K`
//! exceeding one; the rate `N*` is found by bisecting on the first time the
//! shot characteristic hits `phi_f`.

use thiserror::Error;

use crate::meanfield;
use crate::phase_response::{PhaseResponse, PhaseResponseError};
use crate::quantile::QuantileProfile;

#[derive(Debug, Error)]
pub enum SteadyStateError {
    #[error(
        "no steady state exists: the harmonic integral of 1/K is {harmonic_integral} (needs > 1)"
    )]
    NoSteadyState { harmonic_integral: f64 },
    #[error("bracketing the steady firing rate failed: {0}")]
    BracketFailure(String),
    #[error("characteristic integration failed: {0}")]
    IntegrationFailure(String),
    #[error("constructed steady profile failed validation: {0}")]
    InvalidResult(String),
    #[error(transparent)]
    Response(#[from] PhaseResponseError),
}

/// Outcome of the existence dichotomy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Existence {
    Exists {
        harmonic_integral: f64,
    },
    None {
        harmonic_integral: f64,
        /// True when the integral is numerically indistinguishable from one;
        /// the grid cannot resolve which side of the dichotomy applies.
        boundary: bool,
    },
}

/// Stationary solution: firing rate and profile.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub n_star: f64,
    pub profile: QuantileProfile,
}

const BOUNDARY_EPS: f64 = 1e-9;

/// A steady state exists iff the harmonic integral exceeds one strictly;
/// equality is classified as non-existence and flagged as a boundary case.
pub fn exists(k: &PhaseResponse) -> Result<Existence, SteadyStateError> {
    let hi = k.constants()?.harmonic_integral;
    if hi > 1.0 + BOUNDARY_EPS {
        Ok(Existence::Exists {
            harmonic_integral: hi,
        })
    } else {
        Ok(Existence::None {
            harmonic_integral: hi,
            boundary: (hi - 1.0).abs() <= BOUNDARY_EPS,
        })
    }
}

fn rk4(k: &PhaseResponse, c: f64, q: f64, h: f64) -> f64 {
    let f = |q: f64| k.k(q) + c;
    let k1 = f(q);
    let k2 = f(q + 0.5 * h * k1);
    let k3 = f(q + 0.5 * h * k2);
    let k4 = f(q + h * k3);
    q + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn double_step(k: &PhaseResponse, c: f64, q: f64, h: f64) -> f64 {
    rk4(k, c, rk4(k, c, q, 0.5 * h), 0.5 * h)
}

/// Integrate `dq/deta = K(q) + c` from zero until `q` crosses `phi_f`;
/// adaptive RK4 (step doubling) with bisection localization of the event.
/// `c = 0` gives the `N = infinity` characteristic whose hitting position is
/// the harmonic integral.
fn hitting_position(k: &PhaseResponse, c: f64, eta_cap: f64) -> Result<f64, SteadyStateError> {
    let phi_f = k.phi_f();
    if k.k(0.0) + c <= 0.0 {
        return Err(SteadyStateError::IntegrationFailure(format!(
            "drift K(0) + c = {} not positive",
            k.k(0.0) + c
        )));
    }
    let mut eta = 0.0;
    let mut q = 0.0;
    let mut h = (0.05 * phi_f / (k.k(0.0) + c)).min(0.05 * eta_cap);
    let mut rejected = 0usize;
    while eta <= eta_cap {
        let coarse = rk4(k, c, q, h);
        let fine = double_step(k, c, q, h);
        let err = (coarse - fine).abs() / 15.0;
        if err > 1e-13 * h.max(1e-8) {
            h *= 0.5;
            rejected += 1;
            if rejected > 200 {
                return Err(SteadyStateError::IntegrationFailure(
                    "step control failed to converge".into(),
                ));
            }
            continue;
        }
        if fine >= phi_f {
            // Localize the crossing inside [eta, eta + h].
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if double_step(k, c, q, mid) >= phi_f {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-17 * eta_cap.max(1.0) {
                    break;
                }
            }
            return Ok(eta + 0.5 * (lo + hi));
        }
        eta += h;
        q = fine;
        if err < 1e-15 * h {
            h *= 1.5;
        }
    }
    // Unreachable for positive K and c >= 0: the drift is bounded below.
    Err(SteadyStateError::IntegrationFailure(format!(
        "characteristic stayed below phi_f past eta = {eta_cap}"
    )))
}

/// First mass coordinate at which the characteristic shot with firing rate
/// `n` reaches `phi_f`. Strictly increasing in `n`: a faster-firing
/// population drifts each oscillator more slowly in mass.
pub fn first_hitting_eta(k: &PhaseResponse, n: f64) -> Result<f64, SteadyStateError> {
    assert!(n > 0.0, "firing rate must be positive");
    let hi = k.constants()?.harmonic_integral;
    let eta_cap = 10.0 * hi.max(1.0);
    hitting_position(k, 1.0 / n, eta_cap)
}

/// Shooting construction of the steady state on an `m`-cell grid.
pub fn solve(k: &PhaseResponse, m: usize) -> Result<SteadyState, SteadyStateError> {
    if let Existence::None {
        harmonic_integral, ..
    } = exists(k)?
    {
        return Err(SteadyStateError::NoSteadyState { harmonic_integral });
    }
    let phi_f = k.phi_f();
    // Bracket: grow N until the shot overshoots eta = 1, shrink until it
    // undershoots.
    let mut n_hi = 10.0 / phi_f;
    let mut guard = 0;
    while first_hitting_eta(k, n_hi)? <= 1.0 {
        n_hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(SteadyStateError::BracketFailure(
                "upper rate bound not found".into(),
            ));
        }
    }
    let mut n_lo = 1e-6;
    guard = 0;
    while first_hitting_eta(k, n_lo)? >= 1.0 {
        n_lo *= 0.5;
        guard += 1;
        if guard > 200 {
            return Err(SteadyStateError::BracketFailure(
                "lower rate bound not found".into(),
            ));
        }
    }
    let mut n_star = 0.5 * (n_lo + n_hi);
    for _ in 0..300 {
        n_star = 0.5 * (n_lo + n_hi);
        let eta = first_hitting_eta(k, n_star)?;
        if (eta - 1.0).abs() < 1e-12 {
            break;
        }
        if eta < 1.0 {
            n_lo = n_star;
        } else {
            n_hi = n_star;
        }
        if (n_hi - n_lo) < 1e-15 * n_star {
            break;
        }
    }
    // Fill the profile by one more integration with fixed substeps per cell;
    // Z comes from the ODE right-hand side, which keeps the boundary
    // identities exact once Q(1) is snapped onto phi_f.
    let c = 1.0 / n_star;
    let sub = 8;
    let h = 1.0 / (m * sub) as f64;
    let mut q = vec![0.0; m + 1];
    let mut cur = 0.0;
    for j in 0..m {
        for _ in 0..sub {
            cur = rk4(k, c, cur, h);
        }
        q[j + 1] = cur;
    }
    let shot_gap = (q[m] - phi_f).abs();
    if shot_gap > 1e-8 * phi_f {
        return Err(SteadyStateError::BracketFailure(format!(
            "shot endpoint misses phi_f by {shot_gap:e}"
        )));
    }
    q[m] = phi_f;
    let z: Vec<f64> = q.iter().map(|&qj| k.k(qj) + c).collect();
    let profile = QuantileProfile::from_parts(q, z)
        .map_err(|e| SteadyStateError::InvalidResult(e.to_string()))?;
    meanfield::validate_initial(&profile, k)
        .map_err(|e| SteadyStateError::InvalidResult(e.to_string()))?;
    Ok(SteadyState { n_star, profile })
}
