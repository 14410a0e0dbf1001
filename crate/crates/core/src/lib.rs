//! Numerical laboratory for the mean-field dynamics of pulse-coupled
//! oscillators, written in the quantile-function formulation on the dilated
//! timescale.
//!
//! The crate provides:
//!
//! - [`phase_response`]: the phase response function K with its derived rate
//!   constants,
//! - [`quantile`]: transforms between densities, distributions and quantile
//!   profiles, plus the transport distances,
//! - [`meanfield`]: the semi-Lagrangian solver for the quantile transport
//!   system with the firing rate determined implicitly each step,
//! - [`steady_state`]: existence dichotomy and shooting construction of the
//!   stationary profile,
//! - [`particles`]: an event-driven finite-ensemble simulator used as an
//!   independent oracle,
//! - [`diagnostics`]: contraction bands, moment identities and blow-up
//!   bounds evaluated on recorded trajectories,
//! - [`suite`]: the scenario battery behind `pulsefield verify`.

pub mod diagnostics;
pub mod initial;
pub mod meanfield;
pub mod particles;
pub mod phase_response;
pub mod quad;
pub mod quantile;
pub mod steady_state;
pub mod suite;

pub use phase_response::{PhaseResponse, PhaseResponseForm, ResponseConstants};
pub use quantile::{DiscreteDistribution, QuantileProfile};
