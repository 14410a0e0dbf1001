//! Quantile profiles and transport distances.
//!
//! A [`QuantileProfile`] discretizes a non-decreasing Q on the uniform mass
//! grid `eta_j = j/M` together with its co-evolved derivative `Z = dQ/deta`.
//! Because the mass coordinate is the independent variable, the usual
//! Wasserstein distances between distributions are plain `L^p` norms of
//! profile differences.

use serde::Serialize;
use thiserror::Error;

use crate::phase_response::PhaseResponse;

#[derive(Debug, Error)]
pub enum QuantileError {
    #[error("density does not integrate to 1 (integral = {integral})")]
    NotNormalized { integral: f64 },
    #[error("density is not strictly positive at phi = {phi} (value {value}); cannot build a solver-grade profile")]
    NonPositiveDensity { phi: f64, value: f64 },
    #[error("profiles live on different grids ({left} vs {right} cells)")]
    GridMismatch { left: usize, right: usize },
    #[error("functional hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// Discretized quantile function with co-stored derivative.
#[derive(Debug, Clone, Serialize)]
pub struct QuantileProfile {
    q: Vec<f64>,
    z: Vec<f64>,
}

impl QuantileProfile {
    /// Build a profile from node values. Lengths must match and be >= 2.
    pub fn from_parts(q: Vec<f64>, z: Vec<f64>) -> Result<Self, QuantileError> {
        if q.len() != z.len() || q.len() < 2 {
            return Err(QuantileError::InvalidProfile(format!(
                "need matching node arrays of length >= 2, got {} and {}",
                q.len(),
                z.len()
            )));
        }
        if q.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(QuantileError::InvalidProfile(
                "non-finite node value".into(),
            ));
        }
        Ok(QuantileProfile { q, z })
    }

    /// Number of cells M; the profile has M+1 nodes.
    pub fn grid_size(&self) -> usize {
        self.q.len() - 1
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn eta(&self, j: usize) -> f64 {
        j as f64 / self.grid_size() as f64
    }

    pub(crate) fn q_mut(&mut self) -> &mut Vec<f64> {
        &mut self.q
    }

    pub(crate) fn z_mut(&mut self) -> &mut Vec<f64> {
        &mut self.z
    }

    /// Q at arbitrary eta by linear interpolation between nodes.
    pub fn value_at(&self, eta: f64) -> f64 {
        let m = self.grid_size() as f64;
        let x = (eta.clamp(0.0, 1.0)) * m;
        let j = (x.floor() as usize).min(self.grid_size() - 1);
        let t = x - j as f64;
        self.q[j] * (1.0 - t) + self.q[j + 1] * t
    }

    /// True if Q is non-decreasing over the nodes.
    pub fn is_monotone(&self) -> bool {
        self.q.windows(2).all(|w| w[1] >= w[0] - 1e-14)
    }

    /// CSV dump with header `eta,Q,Z` (17 significant digits).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eta,Q,Z\n");
        for j in 0..=self.grid_size() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e}\n",
                self.eta(j),
                self.q[j],
                self.z[j]
            ));
        }
        out
    }
}

/// Finite collection of weighted support points on `[0, phi_f]`.
#[derive(Debug, Clone)]
pub struct DiscreteDistribution {
    /// Sorted support points.
    points: Vec<f64>,
    /// Weights aligned with `points`, summing to one.
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(mut points: Vec<f64>, mut weights: Vec<f64>) -> Result<Self, QuantileError> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(QuantileError::InvalidDistribution(
                "points and weights must be non-empty and of equal length".into(),
            ));
        }
        if weights.iter().any(|w| *w < 0.0) {
            return Err(QuantileError::InvalidDistribution("negative weight".into()));
        }
        if points.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(QuantileError::InvalidDistribution(
                "support points must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(QuantileError::NotNormalized { integral: total });
        }
        let mut idx: Vec<usize> = (0..points.len()).collect();
        idx.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap());
        points = idx.iter().map(|&i| points[i]).collect();
        weights = idx.iter().map(|&i| weights[i]).collect();
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        Ok(DiscreteDistribution {
            points,
            weights,
            cumulative,
        })
    }

    /// Equal-weight empirical measure of the given samples.
    pub fn empirical(samples: &[f64]) -> Result<Self, QuantileError> {
        let n = samples.len();
        DiscreteDistribution::new(samples.to_vec(), vec![1.0 / n as f64; n])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Generalized inverse CDF: `inf { phi >= 0 : F(phi) >= eta }`.
    ///
    /// Atoms give flat stretches, vacuum regions give jumps. By the inf
    /// convention the value at `eta = 0` is 0.
    pub fn icdf(&self, eta: f64) -> f64 {
        if eta <= 0.0 {
            return 0.0;
        }
        let pos = self.cumulative.partition_point(|&c| c < eta - 1e-15);
        self.points[pos.min(self.points.len() - 1)]
    }

    /// Gridded generalized quantile profile; Z is a centered finite
    /// difference of Q kept only as a diagnostic (flat parts give 0, jumps
    /// give spikes).
    pub fn pseudo_inverse(&self, m: usize) -> QuantileProfile {
        let q: Vec<f64> = (0..=m).map(|j| self.icdf(j as f64 / m as f64)).collect();
        let z = finite_difference_z(&q);
        QuantileProfile { q, z }
    }
}

fn finite_difference_z(q: &[f64]) -> Vec<f64> {
    let m = q.len() - 1;
    let d = m as f64;
    (0..=m)
        .map(|j| {
            if j == 0 {
                (q[1] - q[0]) * d
            } else if j == m {
                (q[m] - q[m - 1]) * d
            } else {
                (q[j + 1] - q[j - 1]) * d / 2.0
            }
        })
        .collect()
}

/// Trapezoid rule over profile nodes on the unit mass interval.
pub(crate) fn trapezoid(values: &[f64]) -> f64 {
    let m = values.len() - 1;
    let h = 1.0 / m as f64;
    let mut acc = 0.5 * (values[0] + values[m]);
    for v in &values[1..m] {
        acc += v;
    }
    acc * h
}

/// Build a solver-grade profile from a sampled density on `[0, phi_f]`.
///
/// `rho` holds uniform samples (including both endpoints). The cumulative
/// function is integrated by the trapezoid rule, inverted monotonically at
/// the mass nodes, and Z is set from `1/rho` at the inverted positions. The
/// density must integrate to one within 1e-8; a mismatch up to 1e-4 is
/// renormalized away, anything worse is rejected. With `pde_grade`, zeros in
/// the density are rejected as well.
pub fn quantile_from_density(
    rho: &[f64],
    phi_f: f64,
    m: usize,
    pde_grade: bool,
) -> Result<QuantileProfile, QuantileError> {
    if rho.len() < 2 {
        return Err(QuantileError::InvalidProfile(
            "need at least two density samples".into(),
        ));
    }
    let l = rho.len() - 1;
    let h = phi_f / l as f64;
    if rho.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(QuantileError::InvalidProfile(
            "density must be finite and >= 0".into(),
        ));
    }
    if pde_grade {
        for (i, v) in rho.iter().enumerate() {
            if *v <= 0.0 {
                return Err(QuantileError::NonPositiveDensity {
                    phi: i as f64 * h,
                    value: *v,
                });
            }
        }
    }
    let mut integral = 0.5 * (rho[0] + rho[l]);
    for v in &rho[1..l] {
        integral += v;
    }
    integral *= h;
    if (integral - 1.0).abs() > 1e-4 {
        return Err(QuantileError::NotNormalized { integral });
    }
    // Renormalize small drift so the cumulative hits exactly one.
    let scale = 1.0 / integral;
    let mut cumulative = vec![0.0; l + 1];
    for i in 1..=l {
        cumulative[i] = cumulative[i - 1] + 0.5 * h * (rho[i - 1] + rho[i]) * scale;
    }
    cumulative[l] = 1.0;

    let rho_at = |phi: f64| -> f64 {
        let x = (phi / h).clamp(0.0, l as f64);
        let i = (x.floor() as usize).min(l - 1);
        let t = x - i as f64;
        (rho[i] * (1.0 - t) + rho[i + 1] * t) * scale
    };

    let mut q = Vec::with_capacity(m + 1);
    let mut z = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let eta = j as f64 / m as f64;
        let pos = cumulative.partition_point(|&c| c < eta);
        let phi = if pos == 0 {
            0.0
        } else if cumulative[pos] == eta {
            pos as f64 * h
        } else {
            let i = pos - 1;
            let df = cumulative[pos] - cumulative[i];
            let t = if df > 0.0 {
                (eta - cumulative[i]) / df
            } else {
                0.0
            };
            (i as f64 + t) * h
        };
        q.push(phi);
        z.push(1.0 / rho_at(phi));
    }
    // The mass-one node must land on the top of the support exactly; the
    // interpolated value is roundoff-fragile when the density has a vacuum
    // tail.
    let support_top = h * rho.iter().rposition(|&v| v > 0.0).unwrap_or(l) as f64;
    q[m] = support_top.min(phi_f);
    z[m] = 1.0 / rho_at(q[m]);
    Ok(QuantileProfile { q, z })
}

/// L^p order used by [`wasserstein`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpOrder {
    One,
    Two,
    Infinity,
}

fn check_grids(p1: &QuantileProfile, p2: &QuantileProfile) -> Result<(), QuantileError> {
    if p1.grid_size() != p2.grid_size() {
        return Err(QuantileError::GridMismatch {
            left: p1.grid_size(),
            right: p2.grid_size(),
        });
    }
    Ok(())
}

/// Wasserstein distance between the distributions underlying two profiles:
/// the `L^p(0,1)` norm of `Q1 - Q2`.
pub fn wasserstein(
    p1: &QuantileProfile,
    p2: &QuantileProfile,
    order: LpOrder,
) -> Result<f64, QuantileError> {
    check_grids(p1, p2)?;
    let diff: Vec<f64> = p1.q.iter().zip(&p2.q).map(|(a, b)| a - b).collect();
    Ok(match order {
        LpOrder::One => trapezoid(&diff.iter().map(|d| d.abs()).collect::<Vec<_>>()),
        LpOrder::Two => trapezoid(&diff.iter().map(|d| d * d).collect::<Vec<_>>()).sqrt(),
        LpOrder::Infinity => diff.iter().fold(0.0_f64, |acc, d| acc.max(d.abs())),
    })
}

/// `L^1` distance between the profile derivatives. For boundary-consistent
/// profiles this dominates every Wasserstein distance and is bounded by
/// `2 * phi_f`.
pub fn bv_distance(p1: &QuantileProfile, p2: &QuantileProfile) -> Result<f64, QuantileError> {
    check_grids(p1, p2)?;
    let diff: Vec<f64> = p1.z.iter().zip(&p2.z).map(|(a, b)| (a - b).abs()).collect();
    Ok(trapezoid(&diff))
}

/// Subtract the trapezoid mean from the profile values.
pub fn p0_project(p: &QuantileProfile) -> Vec<f64> {
    let mean = trapezoid(&p.q);
    p.q.iter().map(|v| v - mean).collect()
}

/// `L^2` distance between mean-centered profiles; invariant under translating
/// either underlying distribution.
pub fn modified_l2_distance(
    p1: &QuantileProfile,
    p2: &QuantileProfile,
) -> Result<f64, QuantileError> {
    check_grids(p1, p2)?;
    let a = p0_project(p1);
    let b = p0_project(p2);
    let sq: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).collect();
    Ok(trapezoid(&sq).sqrt())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The pair `(I, I_K)` controlling the derivative-distance evolution:
/// `I = ||Z1 - Z2||_L1` and `I_K` the signed integral of
/// `d/deta (K(Q1) - K(Q2))` against `sign(Z1 - Z2)`. For non-decreasing
/// profiles sharing boundary values, `k_min * I <= I_K <= k_max * I`.
pub fn ik_functional(
    p1: &QuantileProfile,
    p2: &QuantileProfile,
    k: &PhaseResponse,
) -> Result<(f64, f64), QuantileError> {
    check_grids(p1, p2)?;
    let phi_f = k.phi_f();
    let tol = 1e-9 * phi_f.max(1.0);
    for (name, p) in [("first", p1), ("second", p2)] {
        if !p.is_monotone() {
            return Err(QuantileError::HypothesisViolated(format!(
                "{name} profile not monotone"
            )));
        }
        let m = p.grid_size();
        if p.q[0].abs() > tol || (p.q[m] - phi_f).abs() > tol {
            return Err(QuantileError::HypothesisViolated(format!(
                "{name} profile boundary values ({}, {}) differ from (0, {phi_f})",
                p.q[0], p.q[m]
            )));
        }
    }
    let signs: Vec<f64> = p1.z.iter().zip(&p2.z).map(|(a, b)| sign(a - b)).collect();
    let abs_diff: Vec<f64> = p1.z.iter().zip(&p2.z).map(|(a, b)| (a - b).abs()).collect();
    let integrand: Vec<f64> = (0..p1.q.len())
        .map(|j| {
            let g1 = k.k1(p1.q[j]) * p1.z[j];
            let g2 = k.k1(p2.q[j]) * p2.z[j];
            (g1 - g2) * signs[j]
        })
        .collect();
    Ok((trapezoid(&abs_diff), trapezoid(&integrand)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_response::PhaseResponseForm;
    use proptest::prelude::*;

    fn uniform_profile(m: usize, phi_f: f64) -> QuantileProfile {
        let q: Vec<f64> = (0..=m).map(|j| phi_f * j as f64 / m as f64).collect();
        let z = vec![phi_f; m + 1];
        QuantileProfile::from_parts(q, z).unwrap()
    }

    fn sqrt_profile(m: usize) -> QuantileProfile {
        // Quantile of rho = 2*phi on [0,1]: Q = sqrt(eta).
        let q: Vec<f64> = (0..=m).map(|j| (j as f64 / m as f64).sqrt()).collect();
        let z: Vec<f64> = (0..=m)
            .map(|j| 0.5 / (j as f64 / m as f64).sqrt().max(1e-12))
            .collect();
        QuantileProfile::from_parts(q, z).unwrap()
    }

    #[test]
    fn uniform_density_inverts_to_linear_quantile() {
        let rho = vec![1.0; 101];
        let p = quantile_from_density(&rho, 1.0, 4, true).unwrap();
        let expected = [0.0, 0.25, 0.5, 0.75, 1.0];
        for (a, b) in p.q().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        for z in p.z() {
            assert!((z - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_density_inverts_to_sqrt() {
        let l = 2000;
        let rho: Vec<f64> = (0..=l).map(|i| 2.0 * i as f64 / l as f64).collect();
        // rho(0) = 0, so only the transform grade accepts it.
        assert!(matches!(
            quantile_from_density(&rho, 1.0, 100, true),
            Err(QuantileError::NonPositiveDensity { .. })
        ));
        let p = quantile_from_density(&rho, 1.0, 100, false).unwrap();
        for j in 0..=100 {
            let eta = j as f64 / 100.0;
            assert!(
                (p.q()[j] - eta.sqrt()).abs() < 1e-3,
                "Q({eta}) = {} vs {}",
                p.q()[j],
                eta.sqrt()
            );
        }
    }

    #[test]
    fn vacuum_tail_stops_at_support_top() {
        // Uniform mass on [0, 0.5], vacuum above: the generalized inverse
        // tops out at 0.5, not at phi_f.
        let l = 1000;
        let mut rho: Vec<f64> = (0..=l)
            .map(|i| if i as f64 / l as f64 <= 0.5 { 2.0 } else { 0.0 })
            .collect();
        // Trapezoid normalization including the half-cell at the step edge.
        let total = 2.0 * 0.5 + 1.0 / l as f64;
        rho.iter_mut().for_each(|v| *v /= total);
        let p = quantile_from_density(&rho, 1.0, 8, false).unwrap();
        assert!(
            (p.q()[8] - 0.5).abs() < 2.0 / l as f64,
            "Q(1) = {}",
            p.q()[8]
        );
        assert!((p.q()[4] - 0.25).abs() < 2.0 / l as f64);
    }

    #[test]
    fn badly_normalized_density_rejected() {
        let rho = vec![2.0; 11];
        assert!(matches!(
            quantile_from_density(&rho, 1.0, 8, true),
            Err(QuantileError::NotNormalized { .. })
        ));
    }

    #[test]
    fn slightly_off_density_renormalized() {
        let rho = vec![1.0 + 2e-5; 101];
        let p = quantile_from_density(&rho, 1.0, 8, true).unwrap();
        assert!((p.q()[8] - 1.0).abs() < 1e-14);
        assert!((p.z()[4] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn single_atom_pseudo_inverse() {
        let d = DiscreteDistribution::new(vec![0.4], vec![1.0]).unwrap();
        let p = d.pseudo_inverse(10);
        for j in 1..=10 {
            assert_eq!(p.q()[j], 0.4);
        }
        assert_eq!(p.q()[0], 0.0);
    }

    #[test]
    fn two_atoms_split_at_half() {
        let d = DiscreteDistribution::new(vec![0.8, 0.2], vec![0.5, 0.5]).unwrap();
        assert_eq!(d.icdf(0.3), 0.2);
        assert_eq!(d.icdf(0.5), 0.2);
        assert_eq!(d.icdf(0.51), 0.8);
        assert_eq!(d.icdf(1.0), 0.8);
    }

    #[test]
    fn empirical_matches_order_statistics() {
        let samples = [0.9, 0.1, 0.5, 0.3, 0.7];
        let d = DiscreteDistribution::empirical(&samples).unwrap();
        let mut sorted = samples;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for j in 1..=20 {
            let eta = j as f64 / 20.0;
            // Brute-force inf over the sorted list.
            let kth = (eta * 5.0).ceil() as usize;
            assert_eq!(d.icdf(eta), sorted[kth - 1], "eta = {eta}");
        }
    }

    #[test]
    fn atom_plus_uniform_has_flat_segment() {
        // 0.3-mass atom at 0.5 over a discretized uniform background.
        let n_bg = 700;
        let mut points = vec![0.5];
        let mut weights = vec![0.3];
        for i in 0..n_bg {
            points.push((i as f64 + 0.5) / n_bg as f64);
            weights.push(0.7 / n_bg as f64);
        }
        let d = DiscreteDistribution::new(points, weights).unwrap();
        let p = d.pseudo_inverse(1000);
        let flat = p.q().iter().filter(|&&v| (v - 0.5).abs() < 1e-9).count();
        let measured = flat as f64 / 1000.0;
        assert!(
            (measured - 0.3).abs() < 0.01,
            "flat mass fraction {measured}"
        );
    }

    #[test]
    fn wasserstein_of_identical_is_zero() {
        let p = uniform_profile(64, 1.0);
        assert_eq!(wasserstein(&p, &p, LpOrder::One).unwrap(), 0.0);
        assert_eq!(wasserstein(&p, &p, LpOrder::Infinity).unwrap(), 0.0);
    }

    #[test]
    fn wasserstein_between_atoms_is_translation() {
        let m = 2000;
        let d1 = DiscreteDistribution::new(vec![0.2], vec![1.0]).unwrap();
        let d2 = DiscreteDistribution::new(vec![0.3], vec![1.0]).unwrap();
        let w = wasserstein(&d1.pseudo_inverse(m), &d2.pseudo_inverse(m), LpOrder::One).unwrap();
        assert!((w - 0.1).abs() < 1e-3, "w = {w}");
    }

    #[test]
    fn wasserstein_uniform_vs_sqrt() {
        let m = 4000;
        let w = wasserstein(&uniform_profile(m, 1.0), &sqrt_profile(m), LpOrder::One).unwrap();
        // Riemann-sum oracle of the exact integral of |eta - sqrt(eta)|.
        let n = 1_000_000;
        let mut oracle = 0.0;
        for i in 0..n {
            let eta = (i as f64 + 0.5) / n as f64;
            oracle += (eta - eta.sqrt()).abs();
        }
        oracle /= n as f64;
        assert!((oracle - 1.0 / 6.0).abs() < 1e-6);
        assert!((w - oracle).abs() < 1e-3, "w = {w} vs {oracle}");
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = uniform_profile(8, 1.0);
        let b = uniform_profile(16, 1.0);
        assert!(matches!(
            wasserstein(&a, &b, LpOrder::One),
            Err(QuantileError::GridMismatch { .. })
        ));
        assert!(matches!(
            bv_distance(&a, &b),
            Err(QuantileError::GridMismatch { .. })
        ));
    }

    #[test]
    fn bv_distance_of_constant_derivative_gap() {
        let m = 50;
        let q1: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
        let q2: Vec<f64> = (0..=m).map(|j| 1.5 * j as f64 / m as f64).collect();
        let p1 = QuantileProfile::from_parts(q1, vec![1.0; m + 1]).unwrap();
        let p2 = QuantileProfile::from_parts(q2, vec![1.5; m + 1]).unwrap();
        assert!((bv_distance(&p1, &p2).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn p0_project_removes_means() {
        let m = 100;
        let p = uniform_profile(m, 1.0);
        let c = p0_project(&p);
        assert!((c[0] + 0.5).abs() < 1e-12);
        assert!((c[m] - 0.5).abs() < 1e-12);

        let flat = QuantileProfile::from_parts(vec![3.0; m + 1], vec![0.0; m + 1]).unwrap();
        assert!(p0_project(&flat).iter().all(|v| v.abs() < 1e-12));

        let s = sqrt_profile(400);
        let cs = p0_project(&s);
        // Mean of sqrt is 2/3 up to the trapezoid bias of the singular slope.
        assert!((cs[400] - (1.0 - 2.0 / 3.0)).abs() < 1e-3);
    }

    #[test]
    fn modified_l2_ignores_translation() {
        let m = 64;
        let p1 = uniform_profile(m, 1.0);
        let q2: Vec<f64> = p1.q().iter().map(|v| v + 0.37).collect();
        let p2 = QuantileProfile::from_parts(q2, p1.z().to_vec()).unwrap();
        assert!(modified_l2_distance(&p1, &p2).unwrap() < 1e-12);
    }

    #[test]
    fn modified_l2_of_linear_gap() {
        let m = 2000;
        let p1 = uniform_profile(m, 1.0);
        // Q1 - Q2 = eta - 0.5 (already mean-free).
        let p2 = QuantileProfile::from_parts(vec![0.5; m + 1], vec![0.0; m + 1]).unwrap();
        let d = modified_l2_distance(&p1, &p2).unwrap();
        assert!((d - 1.0 / f64::sqrt(12.0)).abs() < 1e-4, "d = {d}");
    }

    #[test]
    fn ik_affine_is_exactly_scaled() {
        let k = PhaseResponse::new(PhaseResponseForm::Affine { k: -0.5, b: 1.0 }, 1.0).unwrap();
        let m = 200;
        let p1 = uniform_profile(m, 1.0);
        let q2: Vec<f64> = (0..=m).map(|j| (j as f64 / m as f64).powi(2)).collect();
        let z2: Vec<f64> = (0..=m).map(|j| 2.0 * j as f64 / m as f64).collect();
        let p2 = QuantileProfile::from_parts(q2, z2).unwrap();
        let (i, ik) = ik_functional(&p1, &p2, &k).unwrap();
        assert!(i > 0.0);
        assert!((ik - (-0.5) * i).abs() < 1e-12 * i.max(1.0));
    }

    #[test]
    fn ik_identical_profiles_vanish() {
        let k = PhaseResponse::new(PhaseResponseForm::Affine { k: 0.3, b: 0.4 }, 1.0).unwrap();
        let p = uniform_profile(32, 1.0);
        let (i, ik) = ik_functional(&p, &p, &k).unwrap();
        assert_eq!(i, 0.0);
        assert_eq!(ik, 0.0);
    }

    #[test]
    fn ik_rejects_mismatched_boundaries() {
        let k = PhaseResponse::new(PhaseResponseForm::Affine { k: 0.0, b: 1.0 }, 1.0).unwrap();
        let m = 16;
        let q: Vec<f64> = (0..=m).map(|j| 0.9 * j as f64 / m as f64).collect();
        let p1 = QuantileProfile::from_parts(q, vec![0.9; m + 1]).unwrap();
        let p2 = uniform_profile(m, 1.0);
        assert!(matches!(
            ik_functional(&p1, &p2, &k),
            Err(QuantileError::HypothesisViolated(_))
        ));
    }

    /// Smooth random monotone profile built from a few Fourier modes; Q(0)=0,
    /// Q(1)=phi_f, Z > 0.
    fn random_smooth_profile(m: usize, phi_f: f64, coeffs: &[f64]) -> QuantileProfile {
        let mut z: Vec<f64> = (0..=m)
            .map(|j| {
                let eta = j as f64 / m as f64;
                let mut v = 1.0;
                for (idx, c) in coeffs.iter().enumerate() {
                    v += c * ((idx + 1) as f64 * std::f64::consts::PI * eta).sin() * 0.8
                        / (idx + 1) as f64;
                }
                v.max(0.05)
            })
            .collect();
        // Normalize the trapezoid integral of Z to phi_f so Q(1) = phi_f.
        let total = trapezoid(&z);
        for v in &mut z {
            *v *= phi_f / total;
        }
        let h = 1.0 / m as f64;
        let mut q = vec![0.0];
        for j in 0..m {
            let next = q[j] + 0.5 * h * (z[j] + z[j + 1]);
            q.push(next);
        }
        let fix = phi_f / q[m];
        for v in q.iter_mut().chain(z.iter_mut()) {
            *v *= fix;
        }
        q[m] = phi_f;
        QuantileProfile::from_parts(q, z).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn lp_orders_are_monotone(c1 in -0.9f64..0.9, c2 in -0.9f64..0.9,
                                  d1 in -0.9f64..0.9, d2 in -0.9f64..0.9) {
            let m = 128;
            let p1 = random_smooth_profile(m, 1.0, &[c1, c2]);
            let p2 = random_smooth_profile(m, 1.0, &[d1, d2]);
            let w1 = wasserstein(&p1, &p2, LpOrder::One).unwrap();
            let w2 = wasserstein(&p1, &p2, LpOrder::Two).unwrap();
            let wi = wasserstein(&p1, &p2, LpOrder::Infinity).unwrap();
            // L^p monotonicity on a probability space, with trapezoid slack.
            prop_assert!(w1 <= w2 + 1e-12);
            prop_assert!(w2 <= wi + 1e-12);
        }

        #[test]
        fn w1_below_bv_for_consistent_profiles(c1 in -0.9f64..0.9, d1 in -0.9f64..0.9) {
            let m = 256;
            let p1 = random_smooth_profile(m, 1.0, &[c1, 0.2]);
            let p2 = random_smooth_profile(m, 1.0, &[d1, -0.3]);
            let w1 = wasserstein(&p1, &p2, LpOrder::One).unwrap();
            let bv = bv_distance(&p1, &p2).unwrap();
            prop_assert!(w1 <= bv + 1e-10);
            prop_assert!(bv <= 2.0 * (1.0 + 1.0 / m as f64) + 1e-10);
        }

        #[test]
        fn p0_output_is_mean_free(c1 in -0.9f64..0.9, c2 in -0.9f64..0.9) {
            let p = random_smooth_profile(64, 1.0, &[c1, c2]);
            let centered = p0_project(&p);
            prop_assert!(trapezoid(&centered).abs() < 1e-12);
        }

        #[test]
        fn ik_band_on_random_pairs(c1 in -0.8f64..0.8, c2 in -0.8f64..0.8,
                                   d1 in -0.8f64..0.8, d2 in -0.8f64..0.8) {
            let m = 512;
            let k = PhaseResponse::new(
                PhaseResponseForm::Quadratic { c0: 1.2, c1: -0.4, c2: -0.1 },
                1.0,
            ).unwrap();
            let c = k.constants().unwrap();
            let p1 = random_smooth_profile(m, 1.0, &[c1, c2]);
            let p2 = random_smooth_profile(m, 1.0, &[d1, d2]);
            let (i, ik) = ik_functional(&p1, &p2, &k).unwrap();
            let slack = 10.0 * i / m as f64 + 1e-12;
            prop_assert!(ik >= c.k_min * i - slack, "ik = {ik}, band floor {}", c.k_min * i);
            prop_assert!(ik <= c.k_max * i + slack, "ik = {ik}, band cap {}", c.k_max * i);
        }
    }

    #[test]
    fn ik_band_over_thousand_seeded_pairs() {
        use rand::{Rng, SeedableRng};
        let m = 256;
        let k = PhaseResponse::new(
            PhaseResponseForm::Quadratic {
                c0: 1.2,
                c1: -0.4,
                c2: -0.1,
            },
            1.0,
        )
        .unwrap();
        let c = k.constants().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20_240_601);
        for trial in 0..1000 {
            let coeffs1 = [rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)];
            let coeffs2 = [rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)];
            let p1 = random_smooth_profile(m, 1.0, &coeffs1);
            let p2 = random_smooth_profile(m, 1.0, &coeffs2);
            let (i, ik) = ik_functional(&p1, &p2, &k).unwrap();
            let slack = 10.0 * i / m as f64 + 1e-12;
            assert!(
                ik >= c.k_min * i - slack,
                "trial {trial}: ik = {ik} below {}",
                c.k_min * i
            );
            assert!(
                ik <= c.k_max * i + slack,
                "trial {trial}: ik = {ik} above {}",
                c.k_max * i
            );
        }
    }

    #[test]
    fn ik_matches_refined_riemann_oracle() {
        let k = PhaseResponse::new(
            PhaseResponseForm::Quadratic {
                c0: 1.2,
                c1: -0.4,
                c2: -0.1,
            },
            1.0,
        )
        .unwrap();
        let m = 400;
        let p1 = random_smooth_profile(m, 1.0, &[0.5, -0.2]);
        let p2 = random_smooth_profile(m, 1.0, &[-0.4, 0.3]);
        let (_, ik) = ik_functional(&p1, &p2, &k).unwrap();
        // Riemann sum at 10x resolution with linear interpolation of q and z.
        let fine = 10 * m;
        let interp = |v: &[f64], eta: f64| {
            let x = eta * m as f64;
            let j = (x.floor() as usize).min(m - 1);
            let t = x - j as f64;
            v[j] * (1.0 - t) + v[j + 1] * t
        };
        let mut oracle = 0.0;
        for i in 0..fine {
            let eta = (i as f64 + 0.5) / fine as f64;
            let z1 = interp(p1.z(), eta);
            let z2 = interp(p2.z(), eta);
            let g = k.k1(interp(p1.q(), eta)) * z1 - k.k1(interp(p2.q(), eta)) * z2;
            oracle += g * sign(z1 - z2);
        }
        oracle /= fine as f64;
        assert!(
            (ik - oracle).abs() < 2e-2 * oracle.abs().max(1.0),
            "{ik} vs {oracle}"
        );
    }

    #[test]
    fn density_round_trip() {
        // Smooth positive density; rebuild it from the profile and compare.
        let l = 4000;
        let m = 256;
        let norm = 1.0;
        let rho: Vec<f64> = (0..=l)
            .map(|i| {
                let phi = i as f64 / l as f64;
                (1.0 + 0.3 * (2.0 * std::f64::consts::PI * phi).sin()) / norm
            })
            .collect();
        let p = quantile_from_density(&rho, 1.0, m, true).unwrap();
        for j in 1..m {
            let phi = p.q()[j];
            let expected = 1.0 + 0.3 * (2.0 * std::f64::consts::PI * phi).sin();
            let got = 1.0 / p.z()[j];
            assert!(
                (got - expected).abs() < 4.0 / m as f64,
                "rho({phi}) = {got} vs {expected}"
            );
        }
        // Mass consistency: integrating 1/Z over Q increments returns 1.
        let mut mass = 0.0;
        for j in 0..m {
            let dq = p.q()[j + 1] - p.q()[j];
            mass += dq * 0.5 * (1.0 / p.z()[j] + 1.0 / p.z()[j + 1]);
        }
        assert!((mass - 1.0).abs() < 4.0 / m as f64, "mass = {mass}");
    }
}
