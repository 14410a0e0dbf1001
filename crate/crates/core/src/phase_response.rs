//! Phase response function K and its derived constants.
//!
//! K is what an oscillator's phase gains when another one fires. It is
//! physically defined on `[0, phi_f]` and must be positive there; evaluation is
//! extended to all of the real line with a C² blend so that characteristics
//! leaving the physical domain (relaxed runs) stay well defined.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{self, QuadError};

#[derive(Debug, Error)]
pub enum PhaseResponseError {
    #[error("phase response must be positive on [0, phi_f]; K({phi}) = {value}")]
    NonPositive { phi: f64, value: f64 },
    #[error("invalid phase response spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Functional form of the phase response.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum PhaseResponseForm {
    Affine {
        k: f64,
        b: f64,
    },
    Quadratic {
        c0: f64,
        c1: f64,
        c2: f64,
    },
    Exponential {
        a: f64,
        r: f64,
    },
    /// Uniform samples of K on [0, phi_f], interpolated by a natural cubic
    /// spline.
    Tabulated {
        samples: Vec<f64>,
    },
}

/// Natural cubic spline on a uniform grid.
#[derive(Debug, Clone)]
struct Spline {
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the knots (natural: zero at both ends).
    m: Vec<f64>,
}

impl Spline {
    fn natural(samples: &[f64], length: f64) -> Self {
        let n = samples.len() - 1;
        let h = length / n as f64;
        let mut m = vec![0.0; n + 1];
        if n >= 2 {
            // Tridiagonal system for interior second derivatives.
            let mut diag = vec![4.0; n - 1];
            let mut rhs = vec![0.0; n - 1];
            for i in 1..n {
                rhs[i - 1] = 6.0 / (h * h) * (samples[i + 1] - 2.0 * samples[i] + samples[i - 1]);
            }
            for i in 1..n - 1 {
                let w = 1.0 / diag[i - 1];
                diag[i] -= w;
                rhs[i] -= w * rhs[i - 1];
            }
            let mut prev = rhs[n - 2] / diag[n - 2];
            m[n - 1] = prev;
            for i in (0..n - 2).rev() {
                prev = (rhs[i] - prev) / diag[i];
                m[i + 1] = prev;
            }
        }
        Spline {
            h,
            y: samples.to_vec(),
            m,
        }
    }

    fn eval(&self, x: f64, order: u8) -> f64 {
        let n = self.y.len() - 1;
        let i = ((x / self.h).floor() as isize).clamp(0, n as isize - 1) as usize;
        let a = i as f64 * self.h;
        let t = x - a;
        let s = self.h - t;
        let (y0, y1, m0, m1, h) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1], self.h);
        match order {
            0 => {
                m0 * s * s * s / (6.0 * h)
                    + m1 * t * t * t / (6.0 * h)
                    + (y0 / h - m0 * h / 6.0) * s
                    + (y1 / h - m1 * h / 6.0) * t
            }
            1 => {
                -m0 * s * s / (2.0 * h) + m1 * t * t / (2.0 * h) - (y0 / h - m0 * h / 6.0)
                    + (y1 / h - m1 * h / 6.0)
            }
            2 => m0 * s / h + m1 * t / h,
            _ => unreachable!(),
        }
    }
}

/// Phase response function on `[0, phi_f]` with a C² extension outside.
#[derive(Debug, Clone)]
pub struct PhaseResponse {
    form: PhaseResponseForm,
    phi_f: f64,
    spline: Option<Spline>,
}

/// Constants derived from K that drive the qualitative theory.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResponseConstants {
    /// K'(0) plus the integral of the negative part of K''.
    pub k_min: f64,
    /// K'(0) plus the integral of the positive part of K''.
    pub k_max: f64,
    /// Integral of 1/K over [0, phi_f]; a steady state exists iff > 1.
    pub harmonic_integral: f64,
    /// Minimum of K on [0, phi_f].
    pub k_min_val: f64,
    /// Maximum of K on [0, phi_f].
    pub k_max_val: f64,
}

const POSITIVITY_SAMPLES: usize = 10_000;

impl PhaseResponse {
    /// Build a phase response, validating positivity of K on `[0, phi_f]` by
    /// dense sampling with local-minimum refinement (a numerical check, not a
    /// proof).
    pub fn new(form: PhaseResponseForm, phi_f: f64) -> Result<Self, PhaseResponseError> {
        if !phi_f.is_finite() || phi_f <= 0.0 {
            return Err(PhaseResponseError::InvalidSpec(format!(
                "phi_f must be positive and finite, got {phi_f}"
            )));
        }
        let spline = match &form {
            PhaseResponseForm::Tabulated { samples } => {
                if samples.len() < 4 {
                    return Err(PhaseResponseError::InvalidSpec(format!(
                        "tabulated K needs at least 4 samples, got {}",
                        samples.len()
                    )));
                }
                if samples.iter().any(|v| !v.is_finite()) {
                    return Err(PhaseResponseError::InvalidSpec(
                        "tabulated K contains non-finite samples".into(),
                    ));
                }
                Some(Spline::natural(samples, phi_f))
            }
            _ => None,
        };
        let k = PhaseResponse {
            form,
            phi_f,
            spline,
        };
        k.check_positivity()?;
        Ok(k)
    }

    pub fn phi_f(&self) -> f64 {
        self.phi_f
    }

    pub fn form(&self) -> &PhaseResponseForm {
        &self.form
    }

    fn check_positivity(&self) -> Result<(), PhaseResponseError> {
        let n = POSITIVITY_SAMPLES;
        let h = self.phi_f / n as f64;
        let mut prev = self.raw(0.0, 0);
        if prev <= 0.0 {
            return Err(PhaseResponseError::NonPositive {
                phi: 0.0,
                value: prev,
            });
        }
        for i in 1..=n {
            let phi = i as f64 * h;
            let v = self.raw(phi, 0);
            if v <= 0.0 {
                return Err(PhaseResponseError::NonPositive { phi, value: v });
            }
            // Interior local minimum: K' changes sign across the cell. Refine
            // by bisection on K' and re-check the value there.
            let a = (i - 1) as f64 * h;
            if self.raw(a, 1) < 0.0 && self.raw(phi, 1) > 0.0 {
                let (mut lo, mut hi) = (a, phi);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.raw(mid, 1) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let mid = 0.5 * (lo + hi);
                let vm = self.raw(mid, 0);
                if vm <= 0.0 {
                    return Err(PhaseResponseError::NonPositive {
                        phi: mid,
                        value: vm,
                    });
                }
            }
            prev = v;
        }
        let _ = prev;
        Ok(())
    }

    /// K, K' or K'' at the given phase; total on all of the real line.
    pub fn eval(&self, phi: f64, order: u8) -> f64 {
        assert!(order <= 2, "order must be 0, 1 or 2");
        if (0.0..=self.phi_f).contains(&phi) {
            return self.raw(phi, order);
        }
        self.extended(phi, order)
    }

    /// Shorthand for `eval(phi, 0)`.
    pub fn k(&self, phi: f64) -> f64 {
        self.eval(phi, 0)
    }

    /// Shorthand for `eval(phi, 1)`.
    pub fn k1(&self, phi: f64) -> f64 {
        self.eval(phi, 1)
    }

    /// Direct form evaluation, valid on `[0, phi_f]`.
    fn raw(&self, phi: f64, order: u8) -> f64 {
        match &self.form {
            PhaseResponseForm::Affine { k, b } => match order {
                0 => k * phi + b,
                1 => *k,
                _ => 0.0,
            },
            PhaseResponseForm::Quadratic { c0, c1, c2 } => match order {
                0 => c0 + c1 * phi + c2 * phi * phi,
                1 => c1 + 2.0 * c2 * phi,
                _ => 2.0 * c2,
            },
            PhaseResponseForm::Exponential { a, r } => a * r.powi(order as i32) * (r * phi).exp(),
            PhaseResponseForm::Tabulated { .. } => self
                .spline
                .as_ref()
                .expect("spline built at construction")
                .eval(phi, order),
        }
    }

    /// Second-order Taylor expansion at the nearest endpoint, blended into a
    /// constant over a margin of `0.5 * phi_f`. The blend weight is a quintic
    /// smoothstep, so the extension is C² with bounded K' and K'' everywhere
    /// and exactly constant beyond the margin.
    fn extended(&self, phi: f64, order: u8) -> f64 {
        let margin = 0.5 * self.phi_f;
        // d = distance outside the domain, sign = d(phi)/d(d).
        let (anchor, d, sign) = if phi > self.phi_f {
            (self.phi_f, phi - self.phi_f, 1.0)
        } else {
            (0.0, -phi, -1.0)
        };
        let v0 = self.raw(anchor, 0);
        let v1 = sign * self.raw(anchor, 1);
        let v2 = self.raw(anchor, 2);
        // Taylor in d and its d-derivatives.
        let taylor = |d: f64| (v0 + v1 * d + 0.5 * v2 * d * d, v1 + v2 * d, v2);
        let plateau = taylor(margin).0;
        if d >= margin {
            return if order == 0 { plateau } else { 0.0 };
        }
        let u = d / margin;
        // Quintic smoothstep from 1 to 0 with two vanishing derivatives at
        // both ends.
        let w = 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
        let w1 = -(30.0 * u * u - 60.0 * u * u * u + 30.0 * u * u * u * u) / margin;
        let w2 = -(60.0 * u - 180.0 * u * u + 120.0 * u * u * u) / (margin * margin);
        let (t0, t1, t2) = taylor(d);
        let g = t0 - plateau;
        match order {
            0 => plateau + w * g,
            1 => sign * (w1 * g + w * t1),
            _ => w2 * g + 2.0 * w1 * t1 + w * t2,
        }
    }

    /// Derived constants; the integrals use adaptive Simpson quadrature.
    pub fn constants(&self) -> Result<ResponseConstants, PhaseResponseError> {
        let tol = quad::DEFAULT_TOL;
        let budget = quad::DEFAULT_BUDGET;
        let kp0 = self.raw(0.0, 1);
        let neg =
            quad::adaptive_simpson(|p| self.raw(p, 2).min(0.0), 0.0, self.phi_f, tol, budget)?;
        let pos =
            quad::adaptive_simpson(|p| self.raw(p, 2).max(0.0), 0.0, self.phi_f, tol, budget)?;
        let harmonic =
            quad::adaptive_simpson(|p| 1.0 / self.raw(p, 0), 0.0, self.phi_f, tol, budget)?;
        let (k_min_val, k_max_val) = self.value_range();
        Ok(ResponseConstants {
            k_min: kp0 + neg,
            k_max: kp0 + pos,
            harmonic_integral: harmonic,
            k_min_val,
            k_max_val,
        })
    }

    fn value_range(&self) -> (f64, f64) {
        let n = POSITIVITY_SAMPLES;
        let h = self.phi_f / n as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut arg_lo = 0.0;
        let mut arg_hi = 0.0;
        for i in 0..=n {
            let phi = i as f64 * h;
            let v = self.raw(phi, 0);
            if v < lo {
                lo = v;
                arg_lo = phi;
            }
            if v > hi {
                hi = v;
                arg_hi = phi;
            }
        }
        // Golden-section polish around the sampled extrema.
        lo = lo.min(self.refine_extremum(arg_lo, h, false));
        hi = hi.max(self.refine_extremum(arg_hi, h, true));
        (lo, hi)
    }

    fn refine_extremum(&self, center: f64, h: f64, maximize: bool) -> f64 {
        let a = (center - h).max(0.0);
        let b = (center + h).min(self.phi_f);
        let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
        let score = |x: f64| {
            let v = self.raw(x, 0);
            if maximize {
                -v
            } else {
                v
            }
        };
        let (mut lo, mut hi) = (a, b);
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let mut f1 = score(x1);
        let mut f2 = score(x2);
        for _ in 0..80 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = score(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = score(x2);
            }
        }
        self.raw(0.5 * (lo + hi), 0)
    }
}
