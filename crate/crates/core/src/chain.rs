//! The −1/+h bonus-malus Markov chain: per-profile transition matrices,
//! stationary distributions, and the mixed level moments
//! m_a(κ, ℓ) = ∫ θ^a π_ℓ(λ_κ θ) g(θ) dθ consumed by every premium scheme.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequency::{truncated_claim_counts, Portfolio, QuadratureRule};

/// Maximum allowed max-norm of πP − π before a stationary vector is rejected.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

/// Row sums of a transition matrix must be one within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

const POWER_ITERATION_TOL: f64 = 1e-12;
const POWER_ITERATION_CAP: usize = 1_000_000;

/// The −1/+h transition rule on `levels` BM levels: one level down after a
/// claim-free year, `penalty` levels up per claim, floored at level 1 and
/// capped at the top level. Level 1 carries the largest bonus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRule {
    levels: usize,
    penalty: usize,
}

impl TransitionRule {
    pub fn new(levels: usize, penalty: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::invalid(
                "levels",
                format!("need at least 2 BM levels, got {levels}"),
            ));
        }
        if penalty < 1 {
            return Err(Error::invalid("penalty", "penalty step must be at least 1"));
        }
        Ok(TransitionRule { levels, penalty })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn penalty(&self) -> usize {
        self.penalty
    }

    /// A penalty larger than `levels − 1` is permitted but means any claim
    /// saturates at the top level immediately; front ends warn on it.
    pub fn saturates_immediately(&self) -> bool {
        self.penalty > self.levels - 1
    }

    /// The 1-based level ⌊z/2⌋ whose relativity pins the scale of a fully
    /// optimized scheme.
    pub fn scale_anchor_level(&self) -> usize {
        self.levels / 2
    }
}

/// Row-stochastic z×z transition matrix for one frequency profile μ = λθ.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    p: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// Transition probability between 1-based levels.
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.p[(from - 1, to - 1)]
    }

    pub(crate) fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Maximum absolute deviation of any row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.dim())
            .map(|i| (self.p.row(i).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Builds the −1/+h matrix for a Poisson(μ) yearly claim count. Claim counts
/// are truncated and renormalized per the frequency-module policy, which
/// keeps every row exactly stochastic.
pub fn build_transition_matrix(frequency: f64, rule: &TransitionRule) -> Result<TransitionMatrix> {
    let pmf = truncated_claim_counts(frequency)
        .map_err(|_| Error::invalid("mu", format!("expected frequency must be positive, got {frequency}")))?;
    build_transition_matrix_from_counts(&pmf, rule)
}

/// Same as [`build_transition_matrix`] but for an arbitrary (already
/// truncated) yearly claim-count distribution, the extension point for
/// negative-binomial or zero-inflated counts. `claim_pmf[n]` is the
/// probability of n claims in a year; the slice is renormalized.
pub fn build_transition_matrix_from_counts(
    claim_pmf: &[f64],
    rule: &TransitionRule,
) -> Result<TransitionMatrix> {
    if claim_pmf.is_empty() {
        return Err(Error::invalid("claim_pmf", "claim-count distribution is empty"));
    }
    if claim_pmf.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid("claim_pmf", "claim-count probabilities must be finite and non-negative"));
    }
    let total: f64 = claim_pmf.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("claim_pmf", "claim-count distribution has zero mass"));
    }
    let z = rule.levels();
    let h = rule.penalty();
    let mut p = DMatrix::<f64>::zeros(z, z);
    for level in 1..=z {
        let down = level.max(2) - 1; // max(1, level - 1)
        p[(level - 1, down - 1)] += claim_pmf[0] / total;
        for (n, &q) in claim_pmf.iter().enumerate().skip(1) {
            let up = level.saturating_add(n.saturating_mul(h)).min(z);
            p[(level - 1, up - 1)] += q / total;
        }
    }
    let m = TransitionMatrix { p };
    debug_assert!(m.max_row_sum_error() <= ROW_SUM_TOL);
    Ok(m)
}

/// Stationary distribution π(μ) of one profile's chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryVector {
    pi: Vec<f64>,
}

impl StationaryVector {
    pub fn probabilities(&self) -> &[f64] {
        &self.pi
    }

    pub fn into_probabilities(self) -> Vec<f64> {
        self.pi
    }

    /// Max-norm of πP − π, the fixed-point residual.
    pub fn residual(&self, matrix: &TransitionMatrix) -> f64 {
        residual_of(&self.pi, matrix.matrix())
    }
}

fn residual_of(pi: &[f64], p: &DMatrix<f64>) -> f64 {
    let z = p.nrows();
    let mut worst = 0.0f64;
    for j in 0..z {
        let mut acc = 0.0;
        for i in 0..z {
            acc += pi[i] * p[(i, j)];
        }
        worst = worst.max((acc - pi[j]).abs());
    }
    worst
}

/// Solves πP = π, Σπ = 1 by a direct LU solve of (Pᵀ − I)π = 0 with the last
/// equation replaced by the normalization; falls back to power iteration when
/// the solve is singular to working precision or fails the residual check.
pub fn stationary_distribution(matrix: &TransitionMatrix) -> Result<StationaryVector> {
    let p = matrix.matrix();
    let z = p.nrows();

    let mut a = p.transpose();
    for i in 0..z {
        a[(i, i)] -= 1.0;
    }
    for j in 0..z {
        a[(z - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(z);
    b[z - 1] = 1.0;

    if let Some(solution) = a.lu().solve(&b) {
        if let Some(pi) = sanitize(solution.as_slice()) {
            if residual_of(&pi, p) <= STATIONARY_RESIDUAL_TOL {
                return Ok(StationaryVector { pi });
            }
        }
    }
    power_iteration(p)
}

/// Clamp sub-tolerance negative entries to zero and renormalize; reject
/// anything more negative (a genuinely failed solve).
fn sanitize(raw: &[f64]) -> Option<Vec<f64>> {
    if raw.iter().any(|&x| !x.is_finite() || x < -1e-9) {
        return None;
    }
    let mut pi: Vec<f64> = raw.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    if total <= 0.0 {
        return None;
    }
    for x in &mut pi {
        *x /= total;
    }
    Some(pi)
}

fn power_iteration(p: &DMatrix<f64>) -> Result<StationaryVector> {
    let z = p.nrows();
    let mut pi = vec![1.0 / z as f64; z];
    let mut next = vec![0.0; z];
    for _ in 0..POWER_ITERATION_CAP {
        for x in next.iter_mut() {
            *x = 0.0;
        }
        for i in 0..z {
            let w = pi[i];
            if w == 0.0 {
                continue;
            }
            for j in 0..z {
                next[j] += w * p[(i, j)];
            }
        }
        let total: f64 = next.iter().sum();
        let mut diff = 0.0f64;
        for j in 0..z {
            next[j] /= total;
            diff = diff.max((next[j] - pi[j]).abs());
        }
        std::mem::swap(&mut pi, &mut next);
        if diff < POWER_ITERATION_TOL {
            break;
        }
    }
    let residual = residual_of(&pi, p);
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(Error::StationarySolve { class: 0, node: 0, residual });
    }
    Ok(StationaryVector { pi })
}

/// The quadrature-resolved integrals m_a(κ, ℓ) = ∫ θ^a π_ℓ(λ_κ θ) g(θ) dθ for
/// a ∈ {0, 1, 2} — the single computational kernel behind every scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedLevelMoments {
    classes: usize,
    levels: usize,
    /// Layout: data[(a · K + κ₀) · z + ℓ₀] with 0-based κ₀, ℓ₀.
    data: Vec<f64>,
}

impl MixedLevelMoments {
    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn level_count(&self) -> usize {
        self.levels
    }

    /// m_order(class, level); `class` and `level` are 1-based.
    pub fn moment(&self, order: usize, class: usize, level: usize) -> f64 {
        debug_assert!(order <= 2 && class >= 1 && level >= 1);
        self.data[(order * self.classes + class - 1) * self.levels + level - 1]
    }

    /// The θ-order-`order` row for one 1-based class, indexed by level.
    pub fn class_row(&self, order: usize, class: usize) -> &[f64] {
        let start = (order * self.classes + class - 1) * self.levels;
        &self.data[start..start + self.levels]
    }
}

/// Computes π(λ_κ θ_j) once per (class, node) pair — K·J stationary solves,
/// run in parallel — then accumulates the three moment orders in a fixed
/// order so results do not depend on the schedule.
pub fn mixed_level_moments(
    portfolio: &Portfolio,
    rule: &TransitionRule,
    quadrature: &QuadratureRule,
) -> Result<MixedLevelMoments> {
    let k_count = portfolio.class_count();
    let z = rule.levels();
    let nodes = quadrature.nodes();
    let weights = quadrature.weights();

    let pairs: Vec<(usize, usize)> = (0..k_count)
        .flat_map(|k| (0..nodes.len()).map(move |j| (k, j)))
        .collect();
    let solved: Vec<Result<Vec<f64>>> = pairs
        .par_iter()
        .map(|&(k, j)| {
            let mu = portfolio.classes()[k].rate * nodes[j];
            let matrix = build_transition_matrix(mu, rule)?;
            stationary_distribution(&matrix)
                .map(StationaryVector::into_probabilities)
                .map_err(|e| match e {
                    Error::StationarySolve { residual, .. } => Error::StationarySolve {
                        class: k + 1,
                        node: j,
                        residual,
                    },
                    other => other,
                })
        })
        .collect();

    let mut data = vec![0.0; 3 * k_count * z];
    for ((k, j), solve) in pairs.into_iter().zip(solved) {
        let pi = solve?;
        let u = weights[j];
        let theta = nodes[j];
        let mut factor = u;
        for order in 0..3 {
            let base = (order * k_count + k) * z;
            for (slot, &mass) in data[base..base + z].iter_mut().zip(&pi) {
                *slot += factor * mass;
            }
            factor *= theta;
        }
    }
    Ok(MixedLevelMoments { classes: k_count, levels: z, data })
}

/// Marginal law of the stationary BM level L and its per-class conditionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLaw {
    marginal: Vec<f64>,
    per_class: Vec<Vec<f64>>,
}

impl LevelLaw {
    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    /// P(L = · | Λ = λ_class) for a 1-based class.
    pub fn conditional(&self, class: usize) -> &[f64] {
        &self.per_class[class - 1]
    }
}

pub fn level_law(moments: &MixedLevelMoments, portfolio: &Portfolio) -> LevelLaw {
    let z = moments.level_count();
    let mut marginal = vec![0.0; z];
    let mut per_class = Vec::with_capacity(moments.class_count());
    for class in portfolio.classes() {
        let row = moments.class_row(0, class.index).to_vec();
        for (m, &p) in marginal.iter_mut().zip(&row) {
            *m += class.weight * p;
        }
        per_class.push(row);
    }
    LevelLaw { marginal, per_class }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frequency::build_gamma_quadrature;
    use approx::assert_abs_diff_eq;

    fn rule() -> TransitionRule {
        TransitionRule::new(10, 2).unwrap()
    }

    #[test]
    fn rule_validation() {
        assert!(TransitionRule::new(1, 1).is_err());
        assert!(TransitionRule::new(10, 0).is_err());
        assert!(TransitionRule::new(10, 9).unwrap().saturates_immediately() == false);
        assert!(TransitionRule::new(10, 10).unwrap().saturates_immediately());
        assert_eq!(rule().scale_anchor_level(), 5);
    }

    #[test]
    fn transition_rows_match_poisson_head() {
        // From level 1 under Poisson(0.5): stay on 0 claims, jump to 3 on one.
        let m = build_transition_matrix(0.5, &rule()).unwrap();
        assert_abs_diff_eq!(m.get(1, 1), (-0.5f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.get(1, 3), 0.5 * (-0.5f64).exp(), epsilon = 1e-12);
        assert!(m.max_row_sum_error() <= ROW_SUM_TOL);
    }

    #[test]
    fn vanishing_frequency_concentrates_on_descent() {
        let m = build_transition_matrix(1e-12, &rule()).unwrap();
        for from in 1..=10usize {
            let down = from.max(2) - 1;
            assert!(m.get(from, down) > 1.0 - 1e-11);
        }
    }

    #[test]
    fn saturation_at_top_level() {
        let m = build_transition_matrix(25.0, &rule()).unwrap();
        let p0 = (-25.0f64).exp();
        assert!(m.get(10, 10) >= 1.0 - p0 - 1e-12);
    }

    #[test]
    fn stationary_fixed_point_and_absorbing_limit() {
        let m = build_transition_matrix(0.7, &rule()).unwrap();
        let pi = stationary_distribution(&m).unwrap();
        assert!(pi.residual(&m) <= STATIONARY_RESIDUAL_TOL);
        let mass: f64 = pi.probabilities().iter().sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);

        // μ → 0⁺ absorbs at the best level.
        let m0 = build_transition_matrix(1e-300, &rule()).unwrap();
        let pi0 = stationary_distribution(&m0).unwrap();
        assert_abs_diff_eq!(pi0.probabilities()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn general_counts_entry_point_matches_poisson() {
        let pmf = truncated_claim_counts(0.5).unwrap();
        let via_counts = build_transition_matrix_from_counts(&pmf, &rule()).unwrap();
        let direct = build_transition_matrix(0.5, &rule()).unwrap();
        assert_eq!(via_counts, direct);
        assert!(build_transition_matrix_from_counts(&[], &rule()).is_err());
        assert!(build_transition_matrix_from_counts(&[-0.1, 1.1], &rule()).is_err());
    }

    #[test]
    fn moments_conserve_mass_and_mean() {
        let portfolio = Portfolio::equally_weighted(&[0.1, 0.5, 0.9], 0.8).unwrap();
        let quad = build_gamma_quadrature(portfolio.residual(), 64).unwrap();
        let moments = mixed_level_moments(&portfolio, &rule(), &quad).unwrap();
        for class in 1..=3 {
            let mass: f64 = moments.class_row(0, class).iter().sum();
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-10);
            let mean: f64 = moments.class_row(1, class).iter().sum();
            assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-8);
        }
        let law = level_law(&moments, &portfolio);
        let total: f64 = law.marginal().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn tiny_dispersion_degenerates_to_point_mass() {
        // ψ → 0 makes Θ degenerate at 1, so m₁ ≈ m₀.
        let portfolio = Portfolio::equally_weighted(&[0.4], 1e-4).unwrap();
        let quad = build_gamma_quadrature(portfolio.residual(), 64).unwrap();
        let moments = mixed_level_moments(&portfolio, &rule(), &quad).unwrap();
        for level in 1..=10 {
            assert_abs_diff_eq!(
                moments.moment(1, 1, level),
                moments.moment(0, 1, level),
                epsilon = 1e-4
            );
        }
    }
}
