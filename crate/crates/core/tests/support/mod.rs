#![allow(dead_code)]

//! Shared fixtures and brute-force oracles for the integration suites.
//!
//! The trapezoid integrators here deliberately avoid the library's
//! Gauss–Laguerre path so they can serve as independent references for the
//! quadrature-backed results.

use bms_core::{
    build_gamma_quadrature, build_transition_matrix, mixed_level_moments, stationary_distribution,
    MixedLevelMoments, Portfolio, QuadratureRule, ResidualLaw, TransitionRule,
};

pub const PSI: f64 = 0.8;
pub const LEVELS: usize = 10;
pub const PENALTY: usize = 2;
pub const NODES: usize = 64;

/// The four studied a-priori rate sets (equal weights, ψ = 0.8).
pub const SCENARIO_RATES: [[f64; 3]; 4] = [
    [0.1, 0.5, 0.9],
    [0.4, 0.5, 0.6],
    [0.6, 1.0, 1.4],
    [0.1, 0.2, 1.2],
];

pub fn scenario_portfolio(index: usize) -> Portfolio {
    Portfolio::equally_weighted(&SCENARIO_RATES[index], PSI).unwrap()
}

pub fn paper_rule() -> TransitionRule {
    TransitionRule::new(LEVELS, PENALTY).unwrap()
}

pub fn quadrature_for(portfolio: &Portfolio) -> QuadratureRule {
    build_gamma_quadrature(portfolio.residual(), NODES).unwrap()
}

pub fn moments_for(portfolio: &Portfolio, rule: &TransitionRule) -> MixedLevelMoments {
    mixed_level_moments(portfolio, rule, &quadrature_for(portfolio)).unwrap()
}

/// Brute-force ∫ f(θ) g(θ) dθ by the trapezoid rule on (0, upper].
pub fn trapezoid_gamma_integral(
    psi: f64,
    upper: f64,
    steps: usize,
    f: impl Fn(f64) -> f64,
) -> f64 {
    let law = ResidualLaw::new(psi).unwrap();
    let h = upper / steps as f64;
    let mut total = 0.0;
    for i in 0..=steps {
        let theta = i as f64 * h;
        let weight = if i == 0 || i == steps { 0.5 } else { 1.0 };
        let value = if theta == 0.0 { 0.0 } else { f(theta) * law.density(theta) };
        total += weight * value;
    }
    total * h
}

/// Brute-force E[t(L) | Λ = rate] = ∫ Σ_ℓ t(ℓ) π_ℓ(rate·θ) g(θ) dθ without
/// touching the Gauss–Laguerre rule. One stationary solve per grid point.
pub fn trapezoid_conditional_level_mean(
    rate: f64,
    psi: f64,
    rule: &TransitionRule,
    table: &[f64],
    steps: usize,
) -> f64 {
    trapezoid_gamma_integral(psi, 60.0, steps, |theta| {
        let matrix = build_transition_matrix(rate * theta, rule).unwrap();
        let pi = stationary_distribution(&matrix).unwrap();
        pi.probabilities()
            .iter()
            .zip(table)
            .map(|(&p, &t)| p * t)
            .sum()
    })
}

pub fn assert_close(label: &str, actual: f64, expected: f64, tol: f64) {
    assert!(
        (actual - expected).abs() <= tol,
        "{label}: got {actual}, expected {expected} (tolerance {tol})"
    );
}

/// Collects deviations instead of panicking, so a whole criterion can report
/// every miss at once.
#[derive(Default)]
pub struct Checker {
    failures: Vec<String>,
    checks: usize,
}

impl Checker {
    pub fn new() -> Self {
        Checker::default()
    }

    pub fn close(&mut self, label: impl AsRef<str>, actual: f64, expected: f64, tol: f64) {
        self.checks += 1;
        if !((actual - expected).abs() <= tol) {
            self.failures.push(format!(
                "{}: got {actual:.6}, expected {expected:.6} (tolerance {tol})",
                label.as_ref()
            ));
        }
    }

    pub fn is_true(&mut self, label: impl AsRef<str>, ok: bool) {
        self.checks += 1;
        if !ok {
            self.failures.push(label.as_ref().to_string());
        }
    }

    /// Prints the one-line verdict and panics when anything failed.
    pub fn finish(self, criterion: &str) {
        if self.failures.is_empty() {
            println!("acceptance {criterion}: PASS ({} checks)", self.checks);
        } else {
            println!("acceptance {criterion}: FAIL ({} of {} checks)", self.failures.len(), self.checks);
            panic!("{criterion}:\n  {}", self.failures.join("\n  "));
        }
    }
}
