//! Event-driven simulation of the finite ensemble: unit drift, threshold
//! firing, reset to zero, and `K(phi)/N`-scaled jumps applied to everyone
//! else, with same-instant chain reactions resolved in decreasing-phase
//! order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::phase_response::PhaseResponse;
use crate::quantile::{DiscreteDistribution, QuantileProfile};

#[derive(Debug, Error)]
pub enum ParticleError {
    #[error("sampling constructors need at least 2 particles, got {0}")]
    TooFew(usize),
    #[error("invalid ensemble: {0}")]
    Invalid(String),
}

/// One firing event: the advance to threshold plus the full cascade it set
/// off.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpikeEvent {
    pub event_index: usize,
    pub t: f64,
    pub cascade_size: usize,
}

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    phases: Vec<f64>,
    phi_f: f64,
    t: f64,
    seed: Option<u64>,
    spike_log: Vec<SpikeEvent>,
}

/// Stopping rule for [`ParticleEnsemble::run`].
#[derive(Debug, Clone, Copy)]
pub enum RunLimit {
    /// Stop once physical time reaches this value.
    UntilTime(f64),
    /// Stop once this many individual resets have been logged.
    UntilSpikes(u64),
}

impl ParticleEnsemble {
    fn checked(phases: Vec<f64>, phi_f: f64, seed: Option<u64>) -> Result<Self, ParticleError> {
        if phases.is_empty() {
            return Err(ParticleError::TooFew(0));
        }
        if phases.iter().any(|p| !(0.0..phi_f).contains(p)) {
            return Err(ParticleError::Invalid(format!(
                "phases must lie in [0, {phi_f}) between events"
            )));
        }
        Ok(ParticleEnsemble {
            phases,
            phi_f,
            t: 0.0,
            seed,
            spike_log: Vec::new(),
        })
    }

    /// Build directly from explicit phases. A singleton runs free with
    /// period `phi_f` (it has no coupling partner).
    pub fn from_phases(phases: Vec<f64>, phi_f: f64) -> Result<Self, ParticleError> {
        Self::checked(phases, phi_f, None)
    }

    /// I.i.d. inverse-CDF sampling from a quantile profile; deterministic for
    /// a fixed seed.
    pub fn from_profile_iid(
        profile: &QuantileProfile,
        count: usize,
        seed: u64,
    ) -> Result<Self, ParticleError> {
        if count < 2 {
            return Err(ParticleError::TooFew(count));
        }
        let phi_f = profile.q()[profile.grid_size()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases: Vec<f64> = (0..count)
            .map(|_| {
                profile
                    .value_at(rng.gen_range(0.0..1.0))
                    .min(phi_f * (1.0 - 1e-15))
            })
            .collect();
        Self::checked(phases, phi_f, Some(seed))
    }

    /// Stratified inverse-CDF positions `eta_i = (i + 1/2)/count` of a
    /// generalized distribution.
    pub fn from_distribution_stratified(
        dist: &DiscreteDistribution,
        count: usize,
        phi_f: f64,
    ) -> Result<Self, ParticleError> {
        if count < 2 {
            return Err(ParticleError::TooFew(count));
        }
        let phases: Vec<f64> = (0..count)
            .map(|i| {
                dist.icdf((i as f64 + 0.5) / count as f64)
                    .min(phi_f * (1.0 - 1e-15))
            })
            .collect();
        Self::checked(phases, phi_f, None)
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn count(&self) -> usize {
        self.phases.len()
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn spike_log(&self) -> &[SpikeEvent] {
        &self.spike_log
    }

    /// Total individual resets so far; divided by `count * elapsed t` this
    /// estimates the population firing rate.
    pub fn total_resets(&self) -> u64 {
        self.spike_log.iter().map(|e| e.cascade_size as u64).sum()
    }

    /// Drift every phase at unit speed until the leader reaches the firing
    /// phase. Returns the elapsed time; leaders are snapped exactly onto
    /// `phi_f`.
    pub fn advance_to_next_firing(&mut self) -> f64 {
        let max = self
            .phases
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        debug_assert!(max < self.phi_f, "a phase already sits at the threshold");
        let dt = self.phi_f - max;
        for p in &mut self.phases {
            *p += dt;
            if *p >= self.phi_f || (*p - self.phi_f).abs() < f64::EPSILON * self.phi_f {
                *p = self.phi_f;
            }
        }
        self.t += dt;
        dt
    }

    /// Resolve the firing event at the current instant: every particle at or
    /// above threshold fires in decreasing-phase order (index breaks ties),
    /// resets to exactly zero, and kicks each particle that has not yet fired
    /// in this cascade by `K(phase)/count`. Overshoot above the threshold is
    /// discarded on reset. Returns the cascade size.
    pub fn fire_and_cascade(&mut self, k: &PhaseResponse) -> usize {
        let n = self.phases.len();
        let scale = 1.0 / n as f64;
        let mut fired = vec![false; n];
        let mut cascade = 0usize;
        loop {
            let mut next: Option<usize> = None;
            for (i, phase) in self.phases.iter().enumerate() {
                if fired[i] || *phase < self.phi_f {
                    continue;
                }
                next = match next {
                    Some(j) if self.phases[j] >= *phase => Some(j),
                    _ => Some(i),
                };
            }
            let Some(i) = next else { break };
            fired[i] = true;
            cascade += 1;
            self.phases[i] = 0.0;
            for (j, p) in self.phases.iter_mut().enumerate() {
                if !fired[j] {
                    *p += k.k(*p) * scale;
                }
            }
        }
        cascade
    }

    /// Alternate advance and cascade until the limit is hit, logging every
    /// event.
    pub fn run(&mut self, k: &PhaseResponse, limit: RunLimit) {
        let mut resets = self.total_resets();
        loop {
            match limit {
                RunLimit::UntilTime(t_end) => {
                    let leader = self
                        .phases
                        .iter()
                        .cloned()
                        .fold(f64::NEG_INFINITY, f64::max);
                    if self.t + (self.phi_f - leader) > t_end {
                        // Drift the remainder without reaching threshold.
                        let dt = t_end - self.t;
                        for p in &mut self.phases {
                            *p += dt;
                        }
                        self.t = t_end;
                        return;
                    }
                }
                RunLimit::UntilSpikes(cap) => {
                    if resets >= cap {
                        return;
                    }
                }
            }
            self.advance_to_next_firing();
            let cascade = self.fire_and_cascade(k);
            resets += cascade as u64;
            let event_index = self.spike_log.len();
            self.spike_log.push(SpikeEvent {
                event_index,
                t: self.t,
                cascade_size: cascade,
            });
        }
    }

    /// Generalized quantile profile of the empirical measure (order
    /// statistics on the mass grid).
    pub fn empirical_quantile(&self, m: usize) -> QuantileProfile {
        DiscreteDistribution::empirical(&self.phases)
            .expect("ensemble phases form a valid empirical measure")
            .pseudo_inverse(m)
    }
}
