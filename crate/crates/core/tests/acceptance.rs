//! Acceptance battery: every verification criterion as its own test, one
//! pass/fail line each. `pulsefield verify` runs the same battery.

use pulsefield_core::suite::{self, CriterionResult};

fn check(result: CriterionResult) {
    println!("{}", result.summary_line());
    assert!(result.pass, "{}", result.summary_line());
}

#[test]
fn criterion_01_steady_constant() {
    check(suite::criterion_01_steady_constant());
}

#[test]
fn criterion_02_steady_affine() {
    check(suite::criterion_02_steady_affine());
}

#[test]
fn criterion_03_affine_l2_rate() {
    check(suite::criterion_03_affine_l2_rate());
}

#[test]
fn criterion_04_bv_band() {
    check(suite::criterion_04_bv_band());
}

#[test]
fn criterion_05_global_n_bounds() {
    check(suite::criterion_05_global_n_bounds());
}

#[test]
fn criterion_06_blowup_characteristics() {
    check(suite::criterion_06_blowup_characteristics());
}

#[test]
fn criterion_07_expansion_blowup() {
    check(suite::criterion_07_expansion_blowup());
}

#[test]
fn criterion_08_structural_invariants() {
    check(suite::criterion_08_structural_invariants());
}

#[test]
fn criterion_09_self_convergence() {
    check(suite::criterion_09_self_convergence());
}

#[test]
fn criterion_10_particle_consistency() {
    check(suite::criterion_10_particle_consistency());
}

#[test]
fn criterion_11_relaxed_continuation() {
    check(suite::criterion_11_relaxed_continuation());
}

#[test]
fn criterion_12_integral_equation() {
    check(suite::criterion_12_integral_equation());
}
