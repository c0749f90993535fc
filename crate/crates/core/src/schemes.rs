//! The four premium schemes — PNO, PPOS, PFOS, POI — plus the pure-relativity
//! reinterpretation, a-priori debiasing, and the Bayesian diagnostic premium.
//!
//! Every scheme is an a-priori rate function ξ over risk classes paired with a
//! relativity table γ: one shared length-z table, or one table per class.

use serde::{Deserialize, Serialize};

use crate::chain::MixedLevelMoments;
use crate::error::{Error, Result};
use crate::frequency::Portfolio;
use crate::metrics::{fairness_index, hmse, FixValue};

/// Premium access shared by both table layouts. `class` and `level` are
/// 1-based throughout.
pub trait PremiumSchedule {
    fn class_count(&self) -> usize;
    fn level_count(&self) -> usize;
    fn premium(&self, class: usize, level: usize) -> f64;
    /// The relativity applied to the class at the level (the shared table
    /// ignores the class).
    fn relativity(&self, class: usize, level: usize) -> f64;
}

/// A scheme in which all classes share one relativity table:
/// M(κ, ℓ) = ξ(λ_κ) γ(ℓ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedScheme {
    xi: Vec<f64>,
    gamma: Vec<f64>,
}

impl SharedScheme {
    pub fn new(xi: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if xi.is_empty() || xi.iter().any(|&x| !x.is_finite() || x <= 0.0) {
            return Err(Error::invalid("xi", "a-priori rates must be positive and finite"));
        }
        if gamma.is_empty() || gamma.iter().any(|&g| !g.is_finite() || g <= 0.0) {
            return Err(Error::invalid("gamma", "relativities must be positive and finite"));
        }
        Ok(SharedScheme { xi, gamma })
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// The same premiums with the scale moved between the factors:
    /// (ξ/c, cγ) for c > 0.
    pub fn rescaled(&self, c: f64) -> SharedScheme {
        SharedScheme {
            xi: self.xi.iter().map(|x| x / c).collect(),
            gamma: self.gamma.iter().map(|g| g * c).collect(),
        }
    }
}

impl PremiumSchedule for SharedScheme {
    fn class_count(&self) -> usize {
        self.xi.len()
    }

    fn level_count(&self) -> usize {
        self.gamma.len()
    }

    fn premium(&self, class: usize, level: usize) -> f64 {
        self.xi[class - 1] * self.gamma[level - 1]
    }

    fn relativity(&self, _class: usize, level: usize) -> f64 {
        self.gamma[level - 1]
    }
}

/// A scheme in which every class carries its own relativity table:
/// M(κ, ℓ) = ξ(λ_κ) γ(κ, ℓ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualizedScheme {
    xi: Vec<f64>,
    gamma: Vec<Vec<f64>>,
}

impl IndividualizedScheme {
    pub fn new(xi: Vec<f64>, gamma: Vec<Vec<f64>>) -> Result<Self> {
        if xi.is_empty() || xi.iter().any(|&x| !x.is_finite() || x <= 0.0) {
            return Err(Error::invalid("xi", "a-priori rates must be positive and finite"));
        }
        if gamma.len() != xi.len() {
            return Err(Error::invalid("gamma", "need one relativity row per class"));
        }
        let z = gamma.first().map_or(0, Vec::len);
        for row in &gamma {
            if row.len() != z || row.iter().any(|&g| !g.is_finite() || g <= 0.0) {
                return Err(Error::invalid("gamma", "relativities must be positive, finite, and rectangular"));
            }
        }
        Ok(IndividualizedScheme { xi, gamma })
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// Relativity row of a 1-based class.
    pub fn gamma_row(&self, class: usize) -> &[f64] {
        &self.gamma[class - 1]
    }

    pub fn gamma(&self) -> &[Vec<f64>] {
        &self.gamma
    }
}

impl PremiumSchedule for IndividualizedScheme {
    fn class_count(&self) -> usize {
        self.xi.len()
    }

    fn level_count(&self) -> usize {
        self.gamma.first().map_or(0, Vec::len)
    }

    fn premium(&self, class: usize, level: usize) -> f64 {
        self.xi[class - 1] * self.gamma[class - 1][level - 1]
    }

    fn relativity(&self, class: usize, level: usize) -> f64 {
        self.gamma[class - 1][level - 1]
    }
}

/// Premium with no a-posteriori rating: ξ = λ, γ ≡ 1.
pub fn pno(portfolio: &Portfolio, levels: usize) -> SharedScheme {
    SharedScheme {
        xi: portfolio.rates(),
        gamma: vec![1.0; levels],
    }
}

/// Classical partial optimization of a shared table with ξ fixed at λ:
/// γ(ℓ) = Σ_κ w_κ λ_κ² m₁(κ,ℓ) / Σ_κ w_κ λ_κ² m₀(κ,ℓ).
pub fn ppos(moments: &MixedLevelMoments, portfolio: &Portfolio) -> Result<SharedScheme> {
    let xi = portfolio.rates();
    let gamma = shared_relativity_update(&xi, moments, portfolio)?;
    Ok(SharedScheme { xi, gamma })
}

/// Fully individualized tables: γ(κ, ℓ) = m₁(κ,ℓ) / m₀(κ,ℓ), the conditional
/// mean of the residual effect given class and level.
pub fn poi(moments: &MixedLevelMoments, portfolio: &Portfolio) -> Result<IndividualizedScheme> {
    let z = moments.level_count();
    let mut gamma = Vec::with_capacity(portfolio.class_count());
    for class in portfolio.classes() {
        let m0 = moments.class_row(0, class.index);
        let m1 = moments.class_row(1, class.index);
        let mut row = Vec::with_capacity(z);
        for level in 0..z {
            if m0[level] <= 0.0 {
                return Err(Error::UnreachableClassLevel {
                    class: class.index,
                    level: level + 1,
                });
            }
            row.push(m1[level] / m0[level]);
        }
        gamma.push(row);
    }
    Ok(IndividualizedScheme { xi: portfolio.rates(), gamma })
}

/// Exact least-squares γ update for a fixed ξ (also the PPOS table when
/// ξ = λ).
fn shared_relativity_update(
    xi: &[f64],
    moments: &MixedLevelMoments,
    portfolio: &Portfolio,
) -> Result<Vec<f64>> {
    let z = moments.level_count();
    let mut gamma = Vec::with_capacity(z);
    for level in 1..=z {
        let mut num = 0.0;
        let mut den = 0.0;
        for class in portfolio.classes() {
            let x = xi[class.index - 1];
            num += class.weight * class.rate * x * moments.moment(1, class.index, level);
            den += class.weight * x * x * moments.moment(0, class.index, level);
        }
        if den <= 0.0 {
            return Err(Error::UnreachableLevel { level });
        }
        gamma.push(num / den);
    }
    Ok(gamma)
}

/// Exact least-squares ξ update for a fixed γ.
fn priori_rate_update(
    gamma: &[f64],
    moments: &MixedLevelMoments,
    portfolio: &Portfolio,
) -> Result<Vec<f64>> {
    let mut xi = Vec::with_capacity(portfolio.class_count());
    for class in portfolio.classes() {
        let m0 = moments.class_row(0, class.index);
        let m1 = moments.class_row(1, class.index);
        let mut num = 0.0;
        let mut den = 0.0;
        for level in 0..gamma.len() {
            num += gamma[level] * m1[level];
            den += gamma[level] * gamma[level] * m0[level];
        }
        if den <= 0.0 {
            return Err(Error::invalid(
                "gamma",
                format!("class {} sees zero mass under the current table", class.index),
            ));
        }
        xi.push(class.rate * num / den);
    }
    Ok(xi)
}

/// Where the coordinate descent starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescentInit {
    /// γ ≡ 1, ξ = λ: the no-posterior-rating premium. The first relativity
    /// update then lands exactly on the PPOS table, which makes the recorded
    /// trace comparable across schemes.
    #[default]
    Pno,
    /// γ = PPOS table, ξ = λ.
    Ppos,
}

/// How the scale constraint γ(⌊z/2⌋) = q is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleAnchor {
    /// q = PPOS relativity at the anchor level.
    #[default]
    MatchPpos,
    /// A fixed positive q.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfosOptions {
    pub init: DescentInit,
    pub anchor: ScaleAnchor,
    /// Stop once the objective's relative decrease over a full (γ, ξ) cycle
    /// falls below this.
    pub tolerance: f64,
    pub max_cycles: usize,
}

impl Default for PfosOptions {
    fn default() -> Self {
        PfosOptions {
            init: DescentInit::default(),
            anchor: ScaleAnchor::default(),
            tolerance: 1e-10,
            max_cycles: 500,
        }
    }
}

/// One recorded half-step of the coordinate descent: which γ/ξ iterates were
/// in force, their (unnormalized) values, and the metrics of that pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentStep {
    pub gamma_iter: usize,
    pub xi_iter: usize,
    pub gamma: Vec<f64>,
    pub xi: Vec<f64>,
    pub fix: FixValue,
    pub hmse: f64,
}

impl DescentStep {
    /// Label in the pairing convention (γ^[m], ξ^[m]) used by the trace
    /// report; kept comma-free so CSV cells need no quoting.
    pub fn label(&self) -> String {
        format!("(gamma[{}] xi[{}])", self.gamma_iter, self.xi_iter)
    }
}

/// The full half-step history of one descent run. FIX and HMSE are scale
/// invariant, so the final rescaling does not alter recorded values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentTrace {
    pub steps: Vec<DescentStep>,
    pub cycles: usize,
    pub converged: bool,
    /// 1-based level whose relativity pins the scale.
    pub anchor_level: usize,
    /// The constraint value q actually applied.
    pub q: f64,
}

/// Full joint optimization of the shared table and the a-priori rate function
/// by alternating exact least-squares updates, then rescaling so that
/// γ(⌊z/2⌋) = q.
pub fn pfos(
    moments: &MixedLevelMoments,
    portfolio: &Portfolio,
    options: &PfosOptions,
) -> Result<(SharedScheme, DescentTrace)> {
    if !(options.tolerance > 0.0) {
        return Err(Error::invalid("tolerance", "descent tolerance must be positive"));
    }
    if options.max_cycles == 0 {
        return Err(Error::invalid("max_cycles", "need at least one descent cycle"));
    }
    let z = moments.level_count();
    let anchor_level = z / 2;
    let q = match options.anchor {
        ScaleAnchor::MatchPpos => ppos(moments, portfolio)?.gamma()[anchor_level - 1],
        ScaleAnchor::Fixed(q) => q,
    };
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::invalid("q", format!("scale constraint must be positive, got {q}")));
    }

    let mut xi = portfolio.rates();
    let mut gamma = match options.init {
        DescentInit::Pno => vec![1.0; z],
        DescentInit::Ppos => shared_relativity_update(&xi, moments, portfolio)?,
    };

    fn record(
        steps: &mut Vec<DescentStep>,
        gamma_iter: usize,
        xi_iter: usize,
        gamma: &[f64],
        xi: &[f64],
        moments: &MixedLevelMoments,
        portfolio: &Portfolio,
    ) -> f64 {
        let scheme = SharedScheme { xi: xi.to_vec(), gamma: gamma.to_vec() };
        let objective = hmse(&scheme, moments, portfolio);
        steps.push(DescentStep {
            gamma_iter,
            xi_iter,
            gamma: gamma.to_vec(),
            xi: xi.to_vec(),
            fix: fairness_index(&scheme, moments, portfolio),
            hmse: objective,
        });
        objective
    }

    let mut steps = Vec::new();
    let mut previous = record(&mut steps, 0, 0, &gamma, &xi, moments, portfolio);
    let mut converged = false;
    let mut cycles = 0;
    for cycle in 1..=options.max_cycles {
        gamma = shared_relativity_update(&xi, moments, portfolio)?;
        record(&mut steps, cycle, cycle - 1, &gamma, &xi, moments, portfolio);
        xi = priori_rate_update(&gamma, moments, portfolio)?;
        let current = record(&mut steps, cycle, cycle, &gamma, &xi, moments, portfolio);
        cycles = cycle;

        if previous - current <= options.tolerance * previous.abs() {
            converged = true;
            break;
        }
        previous = current;
    }

    let trace = DescentTrace { steps, cycles, converged, anchor_level, q };
    if !converged {
        return Err(Error::DescentDidNotConverge {
            cycles: options.max_cycles,
            trace: Box::new(trace),
        });
    }
    let c = q / gamma[anchor_level - 1];
    let scheme = SharedScheme { xi, gamma }.rescaled(c);
    Ok((scheme, trace))
}

/// Rewrites a shared scheme as an individualized one with ξ* = λ and
/// γ*(κ, ℓ) = ξ(λ_κ) γ(ℓ) / λ_κ; premiums are unchanged entrywise.
pub fn pure_relativity_view(scheme: &SharedScheme, portfolio: &Portfolio) -> IndividualizedScheme {
    let gamma = portfolio
        .classes()
        .iter()
        .map(|class| {
            let factor = scheme.xi()[class.index - 1] / class.rate;
            scheme.gamma().iter().map(|g| factor * g).collect()
        })
        .collect();
    IndividualizedScheme { xi: portfolio.rates(), gamma }
}

/// For any positive shared table, the a-priori rate function
/// ξ(λ_κ) = λ_κ / E[γ(L) | Λ = λ_κ] makes the premium unbiased per class and
/// drives the fairness index to zero.
pub fn debias_priori(
    gamma: &[f64],
    portfolio: &Portfolio,
    moments: &MixedLevelMoments,
) -> Result<SharedScheme> {
    if gamma.len() != moments.level_count() {
        return Err(Error::invalid("gamma", "relativity table length must match the level count"));
    }
    if gamma.iter().any(|&g| !g.is_finite() || g <= 0.0) {
        return Err(Error::invalid("gamma", "relativities must be positive and finite"));
    }
    let mut xi = Vec::with_capacity(portfolio.class_count());
    for class in portfolio.classes() {
        let m0 = moments.class_row(0, class.index);
        let conditional_mean: f64 = gamma.iter().zip(m0).map(|(&g, &m)| g * m).sum();
        xi.push(class.rate / conditional_mean);
    }
    Ok(SharedScheme { xi, gamma: gamma.to_vec() })
}

/// Conjugate Poisson–gamma posterior mean premium after `years` observed
/// policy years with `total_claims` claims:
/// λ_κ (1/ψ + n) / (1/ψ + t λ_κ). With no data it returns the a-priori rate.
pub fn bayesian_posterior_mean(
    portfolio: &Portfolio,
    class: usize,
    years: u32,
    total_claims: u64,
) -> Result<f64> {
    if class < 1 || class > portfolio.class_count() {
        return Err(Error::invalid("class", format!("class {class} out of range")));
    }
    let rate = portfolio.classes()[class - 1].rate;
    let prior = portfolio.residual().rate();
    Ok(rate * (prior + total_claims as f64) / (prior + years as f64 * rate))
}
