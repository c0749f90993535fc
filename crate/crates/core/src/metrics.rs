//! Scheme quality metrics: the fairness index (FIX), the hypothetical mean
//! square error (HMSE), conditional means of relativities and premiums, and
//! the chain-only alternative fairness measure.
//!
//! Everything here is an exact summation over (class, level) with the
//! θ-integrals resolved by quadrature — no sampling on the analytic path.

use serde::{Deserialize, Serialize};

use crate::chain::MixedLevelMoments;
use crate::error::{Error, Result};
use crate::frequency::Portfolio;
use crate::schemes::PremiumSchedule;

/// Total pure-relativity variance below this is treated as degenerate and the
/// fairness index reported as undefined.
pub const ZERO_VARIANCE_TOL: f64 = 1e-14;

/// The fairness index, or a flag for premiums whose pure relativity carries
/// no variance at all (e.g. PNO). Tables render the flag as 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixValue {
    Defined(f64),
    Undefined,
}

impl FixValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            FixValue::Defined(v) => Some(*v),
            FixValue::Undefined => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, FixValue::Defined(_))
    }

    /// The table-rendering convention: undefined prints as zero.
    pub fn display_value(&self) -> f64 {
        self.value().unwrap_or(0.0)
    }
}

/// Between-class and within-class components of Var(M/Λ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureRelativityVariance {
    pub between: f64,
    pub within: f64,
}

impl PureRelativityVariance {
    pub fn total(&self) -> f64 {
        self.between + self.within
    }
}

/// Hypothetical mean square error E[(ΛΘ − M(Λ, L))²], expanded over the mixed
/// level moments:
/// Σ_κ w_κ Σ_ℓ [λ_κ² m₂ − 2 λ_κ M m₁ + M² m₀].
pub fn hmse<S: PremiumSchedule + ?Sized>(
    scheme: &S,
    moments: &MixedLevelMoments,
    portfolio: &Portfolio,
) -> f64 {
    let z = moments.level_count();
    let mut total = 0.0;
    for class in portfolio.classes() {
        let m0 = moments.class_row(0, class.index);
        let m1 = moments.class_row(1, class.index);
        let m2 = moments.class_row(2, class.index);
        let mut acc = 0.0;
        for level in 1..=z {
            let m = scheme.premium(class.index, level);
            acc += class.rate * class.rate * m2[level - 1] - 2.0 * class.rate * m * m1[level - 1]
                + m * m * m0[level - 1];
        }
        total += class.weight * acc;
    }
    total
}

/// Per-class conditional means of the pure relativity, E[M/Λ | Λ = λ_κ].
/// This is what the Monte-Carlo oracle estimates; it differs from
/// [`conditional_relativity_means`] exactly when ξ ≠ λ.
pub fn conditional_pure_relativity_means<S: PremiumSchedule + ?Sized>(
    scheme: &S,
    moments: &MixedLevelMoments,
    portfolio: &Portfolio,
) -> Vec<f64> {
    portfolio
        .classes()
        .iter()
        .map(|class| {
            let m0 = moments.class_row(0, class.index);
            (1..=moments.level_count())
                .map(|level| scheme.premium(class.index, level) / class.rate * m0[level - 1])
                .sum()
        })
        .collect()
}

/// The variance decomposition of the pure relativity M/Λ over (Λ, L).
pub fn pure_relativity_variance<S: PremiumSchedule + ?Sized>(
    scheme: &S,
    moments: &MixedLevelMoments,
    portfolio: &Portfolio,
) -> PureRelativityVariance {
    let class_means = conditional_pure_relativity_means(scheme, moments, portfolio);
    let overall: f64 = portfolio
        .classes()
        .iter()
        .map(|c| c.weight * class_means[c.index - 1])
        .sum();
    let mut between = 0.0;
    let mut within = 0.0;
    for class in portfolio.classes() {
        let mean = class_means[class.index - 1];
        between += class.weight * (mean - overall) * (mean - overall);
        let m0 = moments.class_row(0, class.index);
        let mut acc = 0.0;
        for level in 1..=moments.level_count() {
            let r = scheme.premium(class.index, level) / class.rate;
            acc += (r - mean) * (r - mean) * m0[level - 1];
        }
        within += class.weight * acc;
    }
    PureRelativityVariance { between, within }
}

/// Fairness index: the share of pure-relativity variance explained by the
/// a-priori rate. Zero means no double counting; one means the posterior
/// rating is entirely determined a priori.
pub fn fairness_index<S: PremiumSchedule + ?Sized>(
    scheme: &S,
    moments: &MixedLevelMoments,
    portfolio: &Portfolio,
) -> FixValue {
    let decomposition = pure_relativity_variance(scheme, moments, portfolio);
    if decomposition.total() < ZERO_VARIANCE_TOL {
        FixValue::Undefined
    } else {
        FixValue::Defined(decomposition.between / decomposition.total())
    }
}

/// Per-class conditional means of the scheme's own relativity table,
/// E[γ(·, L) | Λ = λ_κ]. For schemes with ξ = λ this coincides with the
/// conditional mean of the pure relativity M/Λ; for others (e.g. the fully
/// optimized table) it is the raw-table mean.
pub fn conditional_relativity_means<S: PremiumSchedule + ?Sized>(
    scheme: &S,
    moments: &MixedLevelMoments,
    portfolio: &Portfolio,
) -> Vec<f64> {
    portfolio
        .classes()
        .iter()
        .map(|class| {
            let m0 = moments.class_row(0, class.index);
            (1..=moments.level_count())
                .map(|level| scheme.relativity(class.index, level) * m0[level - 1])
                .sum()
        })
        .collect()
}

/// E[M | Λ = λ_κ] per class.
pub fn conditional_premium_means<S: PremiumSchedule + ?Sized>(
    scheme: &S,
    moments: &MixedLevelMoments,
    portfolio: &Portfolio,
) -> Vec<f64> {
    portfolio
        .classes()
        .iter()
        .map(|class| {
            let m0 = moments.class_row(0, class.index);
            (1..=moments.level_count())
                .map(|level| scheme.premium(class.index, level) * m0[level - 1])
                .sum()
        })
        .collect()
}

/// Everything a report needs about one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeMetrics {
    pub fix: FixValue,
    pub fix_defined: bool,
    pub hmse: f64,
    /// E[γ(·, L) | Λ = λ_κ] per class (the raw relativity table).
    pub mean_relativity_by_class: Vec<f64>,
    /// E[M | Λ = λ_κ] per class.
    pub mean_premium_by_class: Vec<f64>,
    /// Overall E[M/Λ].
    pub mean_pure_relativity: f64,
}

pub fn scheme_metrics<S: PremiumSchedule + ?Sized>(
    scheme: &S,
    moments: &MixedLevelMoments,
    portfolio: &Portfolio,
) -> SchemeMetrics {
    let fix = fairness_index(scheme, moments, portfolio);
    let mean_pure_relativity = conditional_pure_relativity_means(scheme, moments, portfolio)
        .iter()
        .zip(portfolio.classes())
        .map(|(m, c)| c.weight * m)
        .sum();
    SchemeMetrics {
        fix,
        fix_defined: fix.is_defined(),
        hmse: hmse(scheme, moments, portfolio),
        mean_relativity_by_class: conditional_relativity_means(scheme, moments, portfolio),
        mean_premium_by_class: conditional_premium_means(scheme, moments, portfolio),
        mean_pure_relativity,
    }
}

/// The chain-only fairness measure Var(E[Λ | L]) / Var(Λ). It depends only on
/// the level law, so it cannot distinguish schemes with different relativity
/// tables; shipped for comparison.
pub fn alt_fairness_measure(moments: &MixedLevelMoments, portfolio: &Portfolio) -> Result<f64> {
    if portfolio.class_count() < 2 {
        return Err(Error::invalid(
            "classes",
            "the alternative fairness measure needs at least two classes (Var(Λ) > 0)",
        ));
    }
    let mean_rate = portfolio.mean_rate();
    let var_rate: f64 = portfolio
        .classes()
        .iter()
        .map(|c| c.weight * (c.rate - mean_rate) * (c.rate - mean_rate))
        .sum();

    let z = moments.level_count();
    let mut var_conditional = 0.0;
    for level in 1..=z {
        let mut mass = 0.0;
        let mut rate_mass = 0.0;
        for class in portfolio.classes() {
            let m0 = moments.moment(0, class.index, level);
            mass += class.weight * m0;
            rate_mass += class.weight * class.rate * m0;
        }
        if mass > 0.0 {
            let conditional = rate_mass / mass;
            var_conditional += mass * (conditional - mean_rate) * (conditional - mean_rate);
        }
    }
    Ok(var_conditional / var_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{mixed_level_moments, TransitionRule};
    use crate::frequency::build_gamma_quadrature;
    use crate::schemes::{pno, ppos};
    use approx::assert_abs_diff_eq;

    fn scenario_one() -> (Portfolio, TransitionRule, MixedLevelMoments) {
        let portfolio = Portfolio::equally_weighted(&[0.1, 0.5, 0.9], 0.8).unwrap();
        let rule = TransitionRule::new(10, 2).unwrap();
        let quad = build_gamma_quadrature(portfolio.residual(), 64).unwrap();
        let moments = mixed_level_moments(&portfolio, &rule, &quad).unwrap();
        (portfolio, rule, moments)
    }

    #[test]
    fn flat_scheme_has_undefined_fix() {
        let (portfolio, rule, moments) = scenario_one();
        let scheme = pno(&portfolio, rule.levels());
        let fix = fairness_index(&scheme, &moments, &portfolio);
        assert!(!fix.is_defined());
        assert_eq!(fix.display_value(), 0.0);
    }

    #[test]
    fn decomposition_fractions_sum_to_one() {
        let (portfolio, _, moments) = scenario_one();
        let scheme = ppos(&moments, &portfolio).unwrap();
        let d = pure_relativity_variance(&scheme, &moments, &portfolio);
        let fix = fairness_index(&scheme, &moments, &portfolio).value().unwrap();
        assert_abs_diff_eq!(fix + d.within / d.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn scale_invariance_of_fix_and_hmse() {
        let (portfolio, _, moments) = scenario_one();
        let scheme = ppos(&moments, &portfolio).unwrap();
        let scaled = scheme.rescaled(3.7);
        assert_abs_diff_eq!(
            hmse(&scheme, &moments, &portfolio),
            hmse(&scaled, &moments, &portfolio),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            fairness_index(&scheme, &moments, &portfolio).value().unwrap(),
            fairness_index(&scaled, &moments, &portfolio).value().unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn alt_fairness_needs_rate_variance() {
        let (portfolio, _, moments) = scenario_one();
        let value = alt_fairness_measure(&moments, &portfolio).unwrap();
        assert!(value > 0.0 && value < 1.0);

        let single = Portfolio::equally_weighted(&[0.5], 0.8).unwrap();
        let rule = TransitionRule::new(10, 2).unwrap();
        let quad = build_gamma_quadrature(single.residual(), 32).unwrap();
        let m1 = mixed_level_moments(&single, &rule, &quad).unwrap();
        assert!(alt_fairness_measure(&m1, &single).is_err());
    }
}
