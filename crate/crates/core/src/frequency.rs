//! Portfolio specification: a-priori rate classes, the gamma residual-effect
//! law, and the quadrature rule used to integrate against it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Claim counts are truncated at the smallest `N` whose cumulative pmf is at
/// least `1 - CLAIM_TAIL_MASS`; the retained head is then renormalized so
/// transition-matrix rows stay exactly stochastic.
pub const CLAIM_TAIL_MASS: f64 = 1e-12;

/// One a-priori risk class: expected annual claim frequency and its share of
/// the portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateClass {
    /// 1-based class index κ.
    pub index: usize,
    /// Expected annual claim count λ_κ (> 0).
    pub rate: f64,
    /// Probability mass w_κ of the class (0 < w ≤ 1).
    pub weight: f64,
}

/// The residual-effect distribution Θ: gamma with mean 1 and variance equal
/// to the dispersion ψ (shape 1/ψ, rate 1/ψ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualLaw {
    dispersion: f64,
}

impl ResidualLaw {
    pub fn new(dispersion: f64) -> Result<Self> {
        if !dispersion.is_finite() || dispersion <= 0.0 {
            return Err(Error::invalid(
                "psi",
                format!("dispersion must be positive and finite, got {dispersion}"),
            ));
        }
        Ok(ResidualLaw { dispersion })
    }

    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    /// Gamma shape parameter 1/ψ (equal to the rate, so that E[Θ] = 1).
    pub fn shape(&self) -> f64 {
        1.0 / self.dispersion
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.dispersion
    }

    /// Density g(θ), evaluated in log space to survive extreme shapes.
    pub fn density(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        let a = self.shape();
        let b = self.rate();
        (a * b.ln() + (a - 1.0) * theta.ln() - b * theta - ln_gamma(a)).exp()
    }

    /// Closed-form raw moment E[Θ^order] = ∏_{i<order} (1 + iψ).
    pub fn raw_moment(&self, order: u32) -> f64 {
        (0..order).map(|i| 1.0 + i as f64 * self.dispersion).product()
    }
}

/// A portfolio: discrete rate classes plus the residual-effect law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    classes: Vec<RateClass>,
    residual: ResidualLaw,
}

impl Portfolio {
    /// Validates positivity of rates, contiguous 1-based indices, and that
    /// the weights sum to one within [`WEIGHT_SUM_TOL`].
    pub fn new(classes: Vec<RateClass>, residual: ResidualLaw) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("classes", "portfolio needs at least one class"));
        }
        for (pos, class) in classes.iter().enumerate() {
            if class.index != pos + 1 {
                return Err(Error::invalid(
                    "classes",
                    format!(
                        "class indices must be contiguous starting at 1; position {} has index {}",
                        pos, class.index
                    ),
                ));
            }
            if !class.rate.is_finite() || class.rate <= 0.0 {
                return Err(Error::invalid(
                    "lambda",
                    format!("class {} rate must be positive, got {}", class.index, class.rate),
                ));
            }
            if !class.weight.is_finite() || class.weight <= 0.0 || class.weight > 1.0 {
                return Err(Error::invalid(
                    "weight",
                    format!(
                        "class {} weight must lie in (0, 1], got {}",
                        class.index, class.weight
                    ),
                ));
            }
        }
        let total: f64 = classes.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(
                "weight",
                format!("class weights must sum to 1 (within {WEIGHT_SUM_TOL:e}), got {total}"),
            ));
        }
        Ok(Portfolio { classes, residual })
    }

    /// Convenience constructor assigning contiguous indices from position.
    pub fn from_rates(rates: &[f64], weights: &[f64], dispersion: f64) -> Result<Self> {
        if rates.len() != weights.len() {
            return Err(Error::invalid(
                "classes",
                format!("{} rates but {} weights", rates.len(), weights.len()),
            ));
        }
        let classes = rates
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(pos, (&rate, &weight))| RateClass { index: pos + 1, rate, weight })
            .collect();
        Portfolio::new(classes, ResidualLaw::new(dispersion)?)
    }

    /// Equal-weight portfolio, the common case in the numerical studies.
    pub fn equally_weighted(rates: &[f64], dispersion: f64) -> Result<Self> {
        let w = 1.0 / rates.len() as f64;
        Portfolio::from_rates(rates, &vec![w; rates.len()], dispersion)
    }

    pub fn classes(&self) -> &[RateClass] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn residual(&self) -> &ResidualLaw {
        &self.residual
    }

    pub fn rates(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.rate).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.weight).collect()
    }

    /// Portfolio mean a-priori rate E[Λ].
    pub fn mean_rate(&self) -> f64 {
        self.classes.iter().map(|c| c.weight * c.rate).sum()
    }
}

/// Nodes θ_j and weights u_j such that Σ u_j f(θ_j) ≈ ∫ f(θ) g(θ) dθ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &u)| u * f(t))
            .sum()
    }
}

/// Generalized Gauss–Laguerre rule reweighted for the gamma density of the
/// residual law: exact for ∫ p(θ) g(θ) dθ with p polynomial of degree up to
/// `2 · node_count − 1`.
///
/// Golub–Welsch: nodes are eigenvalues of the symmetric tridiagonal Jacobi
/// matrix for the Laguerre weight x^(1/ψ − 1) e^(−x); weights are the squared
/// first eigenvector components (the gamma normalization Γ(1/ψ) cancels the
/// total Laguerre mass). Nodes are rescaled by ψ to undo the rate 1/ψ.
pub fn build_gamma_quadrature(residual: &ResidualLaw, node_count: usize) -> Result<QuadratureRule> {
    if node_count < 2 {
        return Err(Error::invalid(
            "quadrature_nodes",
            format!("need at least 2 nodes, got {node_count}"),
        ));
    }
    let alpha = residual.shape() - 1.0; // Laguerre exponent, > -1 since shape > 0
    let n = node_count;
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jacobi[(i, i)] = 2.0 * i as f64 + alpha + 1.0;
        if i + 1 < n {
            let off = ((i as f64 + 1.0) * (i as f64 + 1.0 + alpha)).sqrt();
            jacobi[(i, i + 1)] = off;
            jacobi[(i + 1, i)] = off;
        }
    }
    let eigen = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let node = eigen.eigenvalues[j] * residual.dispersion();
            let first = eigen.eigenvectors[(0, j)];
            (node, first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pairs[0].0 <= 0.0 {
        return Err(Error::invalid(
            "quadrature_nodes",
            format!("eigen solve produced a non-positive node {:.3e}", pairs[0].0),
        ));
    }
    Ok(QuadratureRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Poisson pmf e^(−mean) mean^n / n!, evaluated in log space.
pub fn poisson_pmf(mean: f64, n: u64) -> Result<f64> {
    if !mean.is_finite() || mean <= 0.0 {
        return Err(Error::invalid(
            "mean",
            format!("Poisson mean must be positive, got {mean}"),
        ));
    }
    Ok(poisson_pmf_unchecked(mean, n))
}

fn poisson_pmf_unchecked(mean: f64, n: u64) -> f64 {
    if n == 0 {
        return (-mean).exp();
    }
    (-mean + n as f64 * mean.ln() - ln_gamma(n as f64 + 1.0)).exp()
}

/// Truncated, renormalized yearly claim-count distribution used when building
/// transition matrices: the head of the Poisson pmf up to the smallest `N`
/// with cumulative mass ≥ 1 − [`CLAIM_TAIL_MASS`], divided by that mass.
pub fn truncated_claim_counts(mean: f64) -> Result<Vec<f64>> {
    if !mean.is_finite() || mean <= 0.0 {
        return Err(Error::invalid(
            "mean",
            format!("Poisson mean must be positive, got {mean}"),
        ));
    }
    // 12 standard deviations past the mean leaves ~1e-30 in the tail.
    let cap = (mean + 12.0 * mean.sqrt() + 30.0).ceil() as u64;
    let mut pmf = Vec::new();
    let mut cum = 0.0;
    for n in 0..=cap {
        let p = poisson_pmf_unchecked(mean, n);
        pmf.push(p);
        cum += p;
        if cum >= 1.0 - CLAIM_TAIL_MASS {
            break;
        }
    }
    for p in &mut pmf {
        *p /= cum;
    }
    Ok(pmf)
}
