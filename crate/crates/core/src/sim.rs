//! Monte-Carlo portfolio simulator: an independent check of stationary level
//! laws, conditional expectations, FIX, and HMSE.
//!
//! Each policyholder owns a dedicated ChaCha8 stream (stream id = holder
//! index), so a parallel run reproduces the serial result bit for bit and the
//! same seed always yields the same [`SimResult`].

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::TransitionRule;
use crate::error::{Error, Result};
use crate::frequency::Portfolio;
use crate::metrics::ZERO_VARIANCE_TOL;
use crate::schemes::PremiumSchedule;

/// Number of policyholder groups used for the delete-a-group jackknife behind
/// the FIX standard error.
const JACKKNIFE_GROUPS: usize = 64;

/// Where a simulated policyholder starts before burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartingLevel {
    /// A fixed 1-based BM level.
    Fixed(usize),
    /// Uniform over all levels, drawn per policyholder.
    Uniform(UniformTag),
}

/// Serde helper so `"uniform"` parses as the uniform policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UniformTag {
    Uniform,
}

impl StartingLevel {
    pub const UNIFORM: StartingLevel = StartingLevel::Uniform(UniformTag::Uniform);
}

impl Default for StartingLevel {
    fn default() -> Self {
        StartingLevel::Fixed(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub policyholders: usize,
    /// Years evolved before any level is recorded (default 200; the chain
    /// mixes in tens of steps for z = 10).
    pub burn_in_years: u32,
    /// Years over which levels are recorded per policyholder.
    pub sample_years: u32,
    pub seed: u64,
    pub starting_level: StartingLevel,
}

impl SimConfig {
    pub fn new(policyholders: usize, seed: u64) -> Self {
        SimConfig {
            policyholders,
            burn_in_years: 200,
            sample_years: 10,
            seed,
            starting_level: StartingLevel::default(),
        }
    }

    fn validate(&self, levels: usize) -> Result<()> {
        if self.policyholders == 0 {
            return Err(Error::invalid("policyholders", "need at least one policyholder"));
        }
        if self.burn_in_years == 0 {
            return Err(Error::invalid("burn_in_years", "need at least one burn-in year"));
        }
        if self.sample_years == 0 {
            return Err(Error::invalid("sample_years", "need at least one sample year"));
        }
        if let StartingLevel::Fixed(level) = self.starting_level {
            if level < 1 || level > levels {
                return Err(Error::invalid(
                    "starting_level",
                    format!("level {level} outside 1..={levels}"),
                ));
            }
        }
        Ok(())
    }
}

/// A point estimate with its (policyholder-clustered) standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Standardized deviation from a reference value; `None` when the
    /// standard error vanishes.
    pub fn z_score(&self, reference: f64) -> Option<f64> {
        if self.std_error > 0.0 {
            Some((self.value - reference) / self.std_error)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub policyholders: usize,
    pub sample_years: u32,
    pub seed: u64,
    /// Policyholders drawn into each class.
    pub class_counts: Vec<usize>,
    /// Empirical marginal P(L = ℓ).
    pub level_law: Vec<Estimate>,
    /// Empirical P(L = ℓ | Λ = λ_κ), one row per class.
    pub per_class_level_law: Vec<Vec<Estimate>>,
    /// Empirical E[M/Λ | Λ = λ_κ] (the pure relativity).
    pub mean_pure_relativity_by_class: Vec<Estimate>,
    pub fix: Estimate,
    pub hmse: Estimate,
}

/// Recorded sufficient statistics for one simulated policyholder.
#[derive(Debug, Clone)]
struct PolicyPath {
    /// 0-based class index.
    class: usize,
    theta: f64,
    /// Years spent at each level (0-based) during the sample window.
    level_years: Vec<u32>,
}

/// Draws the portfolio, evolves each policyholder through burn-in, and
/// records level occupancies over the sample window. Deterministic for a
/// fixed seed regardless of thread count.
fn simulate_paths(
    portfolio: &Portfolio,
    rule: &TransitionRule,
    config: &SimConfig,
) -> Result<Vec<PolicyPath>> {
    config.validate(rule.levels())?;

    let z = rule.levels();
    let h = rule.penalty();
    let shape = portfolio.residual().shape();
    // Shape–scale parametrization: mean = shape · scale = 1.
    let gamma_law = Gamma::new(shape, portfolio.residual().dispersion())
        .map_err(|e| Error::invalid("psi", format!("gamma sampler rejected the law: {e}")))?;
    let mut cumulative = Vec::with_capacity(portfolio.class_count());
    let mut acc = 0.0;
    for class in portfolio.classes() {
        acc += class.weight;
        cumulative.push(acc);
    }
    let rates = portfolio.rates();

    let paths: Vec<PolicyPath> = (0..config.policyholders)
        .into_par_iter()
        .map(|holder| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(holder as u64);

            let draw: f64 = rng.random();
            let class = cumulative.iter().position(|&c| draw < c).unwrap_or(rates.len() - 1);
            let theta: f64 = gamma_law.sample(&mut rng);
            let mu = rates[class] * theta;
            // Inversion below mean 10, rejection above — rand_distr's split.
            let claims = if mu > f64::MIN_POSITIVE { Poisson::new(mu).ok() } else { None };

            let mut level = match config.starting_level {
                StartingLevel::Fixed(l) => l,
                StartingLevel::Uniform(_) => rng.random_range(1..=z),
            };
            let step = |level: usize, rng: &mut ChaCha8Rng| -> usize {
                let n = claims.as_ref().map_or(0.0, |p| p.sample(rng)) as usize;
                if n == 0 {
                    level.max(2) - 1
                } else {
                    level.saturating_add(n.saturating_mul(h)).min(z)
                }
            };
            for _ in 0..config.burn_in_years {
                level = step(level, &mut rng);
            }
            let mut level_years = vec![0u32; z];
            for _ in 0..config.sample_years {
                level_years[level - 1] += 1;
                level = step(level, &mut rng);
            }
            PolicyPath { class, theta, level_years }
        })
        .collect();
    Ok(paths)
}

/// Mean and standard error of per-policyholder values (policyholders are
/// independent, so clustering by holder absorbs the within-path
/// autocorrelation).
fn mean_estimate(values: impl Iterator<Item = f64> + Clone, count: usize) -> Estimate {
    let n = count as f64;
    let mean = values.clone().sum::<f64>() / n;
    if count < 2 {
        return Estimate { value: mean, std_error: 0.0 };
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    Estimate { value: mean, std_error: (ss / (n - 1.0)).sqrt() / n.sqrt() }
}

fn evaluate<S: PremiumSchedule + ?Sized>(
    paths: &[PolicyPath],
    portfolio: &Portfolio,
    scheme: &S,
    config: &SimConfig,
) -> Result<SimResult> {
    let z = paths[0].level_years.len();
    let k_count = portfolio.class_count();
    let years = config.sample_years as f64;
    let rates = portfolio.rates();

    let mut class_counts = vec![0usize; k_count];
    for path in paths {
        class_counts[path.class] += 1;
    }
    if let Some(class) = class_counts.iter().position(|&c| c < 2) {
        return Err(Error::invalid(
            "policyholders",
            format!(
                "class {} received {} policyholders; raise the policyholder count",
                class + 1,
                class_counts[class]
            ),
        ));
    }

    // Pure relativity per (class, level), shared by every estimator below.
    let relativity: Vec<Vec<f64>> = (1..=k_count)
        .map(|class| (1..=z).map(|level| scheme.premium(class, level) / rates[class - 1]).collect())
        .collect();

    let level_law = (0..z)
        .map(|l| mean_estimate(paths.iter().map(|p| p.level_years[l] as f64 / years), paths.len()))
        .collect();
    let per_class_level_law = (0..k_count)
        .map(|k| {
            let members: Vec<&PolicyPath> = paths.iter().filter(|p| p.class == k).collect();
            (0..z)
                .map(|l| {
                    mean_estimate(
                        members.iter().map(|p| p.level_years[l] as f64 / years),
                        members.len(),
                    )
                })
                .collect()
        })
        .collect();
    let mean_pure_relativity_by_class = (0..k_count)
        .map(|k| {
            let members: Vec<&PolicyPath> = paths.iter().filter(|p| p.class == k).collect();
            mean_estimate(
                members.iter().map(|p| {
                    p.level_years
                        .iter()
                        .zip(&relativity[k])
                        .map(|(&c, &r)| c as f64 * r)
                        .sum::<f64>()
                        / years
                }),
                members.len(),
            )
        })
        .collect();
    let hmse = mean_estimate(
        paths.iter().map(|p| {
            let target = rates[p.class] * p.theta;
            p.level_years
                .iter()
                .enumerate()
                .map(|(l, &c)| {
                    let diff = target - scheme.premium(p.class + 1, l + 1);
                    c as f64 * diff * diff
                })
                .sum::<f64>()
                / years
        }),
        paths.len(),
    );
    let fix = empirical_fix(paths, &relativity, k_count);

    Ok(SimResult {
        policyholders: paths.len(),
        sample_years: config.sample_years,
        seed: config.seed,
        class_counts,
        level_law,
        per_class_level_law,
        mean_pure_relativity_by_class,
        fix,
        hmse,
    })
}

/// Empirical FIX = between / (between + within) over pooled policy-years,
/// with a delete-a-group jackknife over policyholder groups for the standard
/// error. Degenerate (zero-variance) relativities report 0 ± 0, matching the
/// table convention for the undefined index.
fn empirical_fix(paths: &[PolicyPath], relativity: &[Vec<f64>], k_count: usize) -> Estimate {
    let groups = JACKKNIFE_GROUPS.min(paths.len());
    // Per (group, class): observation count, Σr, Σr².
    let mut stats = vec![[0.0f64; 3]; groups * k_count];
    for (holder, path) in paths.iter().enumerate() {
        let slot = &mut stats[(holder % groups) * k_count + path.class];
        for (l, &c) in path.level_years.iter().enumerate() {
            if c > 0 {
                let r = relativity[path.class][l];
                let cf = c as f64;
                slot[0] += cf;
                slot[1] += cf * r;
                slot[2] += cf * r * r;
            }
        }
    }
    let mut totals = vec![[0.0f64; 3]; k_count];
    for g in 0..groups {
        for k in 0..k_count {
            for i in 0..3 {
                totals[k][i] += stats[g * k_count + k][i];
            }
        }
    }
    let fix_of = |class_stats: &[[f64; 3]]| -> Option<f64> {
        let n: f64 = class_stats.iter().map(|s| s[0]).sum();
        let grand_mean: f64 = class_stats.iter().map(|s| s[1]).sum::<f64>() / n;
        let mut between = 0.0;
        let mut within = 0.0;
        for s in class_stats {
            if s[0] == 0.0 {
                continue;
            }
            let share = s[0] / n;
            let mean = s[1] / s[0];
            between += share * (mean - grand_mean) * (mean - grand_mean);
            within += share * (s[2] / s[0] - mean * mean);
        }
        let total = between + within;
        if total < ZERO_VARIANCE_TOL {
            None
        } else {
            Some(between / total)
        }
    };

    let Some(full) = fix_of(&totals) else {
        return Estimate { value: 0.0, std_error: 0.0 };
    };
    let mut replicates = Vec::with_capacity(groups);
    let mut held_out = vec![[0.0f64; 3]; k_count];
    for g in 0..groups {
        for k in 0..k_count {
            for i in 0..3 {
                held_out[k][i] = totals[k][i] - stats[g * k_count + k][i];
            }
        }
        if let Some(replicate) = fix_of(&held_out) {
            replicates.push(replicate);
        }
    }
    if replicates.len() < 2 {
        return Estimate { value: full, std_error: 0.0 };
    }
    let b = replicates.len() as f64;
    let mean = replicates.iter().sum::<f64>() / b;
    let ss: f64 = replicates.iter().map(|r| (r - mean) * (r - mean)).sum();
    Estimate { value: full, std_error: ((b - 1.0) / b * ss).sqrt() }
}

/// Simulates the portfolio under the given rule and evaluates the scheme on
/// the recorded paths. Deterministic for a fixed seed.
pub fn simulate<S: PremiumSchedule + ?Sized>(
    portfolio: &Portfolio,
    rule: &TransitionRule,
    scheme: &S,
    config: &SimConfig,
) -> Result<SimResult> {
    let paths = simulate_paths(portfolio, rule, config)?;
    evaluate(&paths, portfolio, scheme, config)
}

/// Simulates once and evaluates several schemes against the same paths; the
/// per-scheme results are what [`simulate`] would return for each.
pub fn simulate_many(
    portfolio: &Portfolio,
    rule: &TransitionRule,
    schemes: &[&dyn PremiumSchedule],
    config: &SimConfig,
) -> Result<Vec<SimResult>> {
    let paths = simulate_paths(portfolio, rule, config)?;
    schemes
        .iter()
        .map(|scheme| evaluate(&paths, portfolio, *scheme, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{mixed_level_moments, TransitionRule};
    use crate::frequency::build_gamma_quadrature;
    use crate::schemes::ppos;
    use approx::assert_abs_diff_eq;

    fn setup() -> (Portfolio, TransitionRule) {
        (
            Portfolio::equally_weighted(&[0.1, 0.5, 0.9], 0.8).unwrap(),
            TransitionRule::new(10, 2).unwrap(),
        )
    }

    #[test]
    fn same_seed_reproduces_bit_identical_results() {
        let (portfolio, rule) = setup();
        let quad = build_gamma_quadrature(portfolio.residual(), 32).unwrap();
        let moments = mixed_level_moments(&portfolio, &rule, &quad).unwrap();
        let scheme = ppos(&moments, &portfolio).unwrap();
        let config = SimConfig { policyholders: 2_000, ..SimConfig::new(2_000, 42) };
        let a = simulate(&portfolio, &rule, &scheme, &config).unwrap();
        let b = simulate(&portfolio, &rule, &scheme, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_level_laws_are_normalized() {
        let (portfolio, rule) = setup();
        let scheme = crate::schemes::pno(&portfolio, rule.levels());
        let config = SimConfig::new(3_000, 7);
        let result = simulate(&portfolio, &rule, &scheme, &config).unwrap();
        let total: f64 = result.level_law.iter().map(|e| e.value).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        for class in &result.per_class_level_law {
            let mass: f64 = class.iter().map(|e| e.value).sum();
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
        }
        // PNO's pure relativity is constant, so its empirical FIX degenerates.
        assert_eq!(result.fix, Estimate { value: 0.0, std_error: 0.0 });
    }

    #[test]
    fn starting_level_washes_out_after_burn_in() {
        let (portfolio, rule) = setup();
        let scheme = crate::schemes::pno(&portfolio, rule.levels());
        let base = SimConfig::new(20_000, 99);
        let from_bottom = simulate(&portfolio, &rule, &scheme, &base).unwrap();
        let from_uniform = simulate(
            &portfolio,
            &rule,
            &scheme,
            &SimConfig { starting_level: StartingLevel::UNIFORM, ..base },
        )
        .unwrap();
        for (a, b) in from_bottom.level_law.iter().zip(&from_uniform.level_law) {
            let se = (a.std_error * a.std_error + b.std_error * b.std_error).sqrt();
            assert!(
                (a.value - b.value).abs() <= 3.0 * se,
                "level laws disagree beyond 3 SE: {} vs {} (se {se})",
                a.value,
                b.value
            );
        }
    }

    #[test]
    fn doubling_the_sample_shrinks_standard_errors() {
        let (portfolio, rule) = setup();
        let quad = build_gamma_quadrature(portfolio.residual(), 32).unwrap();
        let moments = mixed_level_moments(&portfolio, &rule, &quad).unwrap();
        let scheme = ppos(&moments, &portfolio).unwrap();
        let small = simulate(&portfolio, &rule, &scheme, &SimConfig::new(10_000, 5)).unwrap();
        let large = simulate(&portfolio, &rule, &scheme, &SimConfig::new(20_000, 5)).unwrap();
        let ratio = large.hmse.std_error / small.hmse.std_error;
        let expected = 1.0 / 2.0f64.sqrt();
        assert!(
            (ratio - expected).abs() <= 0.2 * expected,
            "SE ratio {ratio} strays more than 20% from 1/sqrt(2)"
        );
    }

    #[test]
    fn config_validation_names_fields() {
        let (portfolio, rule) = setup();
        let scheme = crate::schemes::pno(&portfolio, rule.levels());
        let bad = SimConfig { starting_level: StartingLevel::Fixed(11), ..SimConfig::new(10, 1) };
        let err = simulate(&portfolio, &rule, &scheme, &bad).unwrap_err();
        assert!(err.to_string().contains("starting_level"));
        let bad = SimConfig { burn_in_years: 0, ..SimConfig::new(10, 1) };
        assert!(simulate(&portfolio, &rule, &scheme, &bad).is_err());
    }
}
