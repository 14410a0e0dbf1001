//! Initial-data constructors that satisfy the boundary values and the
//! first-order compatibility condition `Z(1) - Z(0) = K(phi_f) - K(0)`
//! exactly, so the solver accepts them without a derivative discontinuity.

use crate::meanfield::{validate_initial, MeanFieldError};
use crate::phase_response::PhaseResponse;
use crate::quantile::{quantile_from_density, QuantileProfile};
use crate::steady_state::SteadyState;

use std::f64::consts::PI;

/// Smooth compatible profile with prescribed boundary slope `z_end = Z(1)`.
///
/// `Z(eta) = z0 + dK * eta + A * sin(pi * eta)` with `z0 = z_end - dK` and the
/// sine amplitude fixed by `Q(1) = phi_f`; the antiderivative is closed-form,
/// so both boundary identities hold to machine precision. `z_end` controls
/// the initial firing rate via `N(0) = 1/(z_end - K(phi_f))`.
pub fn sine_compatible(
    k: &PhaseResponse,
    m: usize,
    z_end: f64,
) -> Result<QuantileProfile, MeanFieldError> {
    let phi_f = k.phi_f();
    let dk = k.k(phi_f) - k.k(0.0);
    let z0 = z_end - dk;
    let amp = 0.5 * PI * (phi_f - z0 - 0.5 * dk);
    let mut q = Vec::with_capacity(m + 1);
    let mut z = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let eta = j as f64 / m as f64;
        q.push(z0 * eta + 0.5 * dk * eta * eta + amp * (1.0 - (PI * eta).cos()) / PI);
        z.push(z0 + dk * eta + amp * (PI * eta).sin());
    }
    q[m] = phi_f;
    let profile = QuantileProfile::from_parts(q, z)
        .map_err(|e| MeanFieldError::InvalidProfile(e.to_string()))?;
    validate_initial(&profile, k)?;
    Ok(profile)
}

/// Steady profile plus an `eps`-sized bump `eps * sin(pi * mode * eta) *
/// eta * (1 - eta)`. The bump and its derivative vanish at both endpoints,
/// so boundary values, compatibility and the initial firing rate are all
/// preserved.
pub fn perturbed_steady(
    star: &SteadyState,
    k: &PhaseResponse,
    eps: f64,
    mode_number: u32,
) -> Result<QuantileProfile, MeanFieldError> {
    let m = star.profile.grid_size();
    let freq = PI * mode_number as f64;
    let mut q = star.profile.q().to_vec();
    let mut z = star.profile.z().to_vec();
    for j in 0..=m {
        let eta = j as f64 / m as f64;
        let shape = eta * (1.0 - eta);
        q[j] += eps * (freq * eta).sin() * shape;
        z[j] += eps * (freq * (freq * eta).cos() * shape + (freq * eta).sin() * (1.0 - 2.0 * eta));
    }
    let profile = QuantileProfile::from_parts(q, z)
        .map_err(|e| MeanFieldError::InvalidProfile(e.to_string()))?;
    validate_initial(&profile, k)?;
    Ok(profile)
}

/// Beta-shaped density `(phi/phi_f)^(a-1) (1 - phi/phi_f)^(b-1)` with a small
/// positive floor, inverted to a quantile profile and then corrected at the
/// endpoint derivatives by a cubic Hermite bump to restore compatibility.
pub fn beta_like(
    k: &PhaseResponse,
    m: usize,
    a: f64,
    b: f64,
) -> Result<QuantileProfile, MeanFieldError> {
    if a < 1.0 || b < 1.0 {
        return Err(MeanFieldError::InvalidProfile(
            "beta-like preset needs shape parameters >= 1".into(),
        ));
    }
    let phi_f = k.phi_f();
    let samples = (8 * m).max(1024);
    let mut rho: Vec<f64> = (0..=samples)
        .map(|i| {
            let x = i as f64 / samples as f64;
            x.powf(a - 1.0) * (1.0 - x).powf(b - 1.0) + 0.05
        })
        .collect();
    let h = phi_f / samples as f64;
    let mut total = 0.5 * (rho[0] + rho[samples]);
    for v in &rho[1..samples] {
        total += v;
    }
    total *= h;
    for v in &mut rho {
        *v /= total;
    }
    let raw = quantile_from_density(&rho, phi_f, m, true)
        .map_err(|e| MeanFieldError::InvalidProfile(e.to_string()))?;
    compatibility_corrected(raw, k)
}

/// Add a cubic Hermite bump (zero at both endpoints) whose endpoint slopes
/// shift `Z(0)` and `Z(1)` onto the compatibility line while keeping
/// `Z(1) > K(phi_f)` with a margin.
pub fn compatibility_corrected(
    profile: QuantileProfile,
    k: &PhaseResponse,
) -> Result<QuantileProfile, MeanFieldError> {
    let phi_f = k.phi_f();
    let m = profile.grid_size();
    let dk = k.k(phi_f) - k.k(0.0);
    let z0 = profile.z()[0];
    let zm = profile.z()[m];
    let defect = dk - (zm - z0);
    let mut d1 = 0.5 * defect;
    let floor = k.k(phi_f) + 0.05 * phi_f;
    if zm + d1 < floor {
        d1 = floor - zm;
    }
    let d0 = d1 - defect;
    let mut q = profile.q().to_vec();
    let mut z = profile.z().to_vec();
    for j in 0..=m {
        let eta = j as f64 / m as f64;
        // Hermite basis: h(0)=h(1)=0, h'(0)=d0, h'(1)=d1.
        let bump =
            d0 * (eta - 2.0 * eta * eta + eta * eta * eta) + d1 * (eta * eta * eta - eta * eta);
        let slope = d0 * (1.0 - 4.0 * eta + 3.0 * eta * eta) + d1 * (3.0 * eta * eta - 2.0 * eta);
        q[j] += bump;
        z[j] += slope;
    }
    let corrected = QuantileProfile::from_parts(q, z)
        .map_err(|e| MeanFieldError::InvalidProfile(e.to_string()))?;
    validate_initial(&corrected, k)?;
    Ok(corrected)
}
