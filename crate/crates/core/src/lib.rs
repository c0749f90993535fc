//! Construction and evaluation of bonus-malus experience-rating systems over
//! a mixed-frequency insurance portfolio.
//!
//! The pipeline: a [`Portfolio`] (a-priori rate classes plus a gamma residual
//! law) and a [`TransitionRule`] define, per frequency profile, a −1/+h
//! Markov chain whose stationary distributions are folded against the
//! residual law by Gauss–Laguerre quadrature into [`MixedLevelMoments`].
//! Every premium scheme — [`pno`], [`ppos`], [`pfos`], [`poi`] — and every
//! metric (fairness index, hypothetical mean square error, conditional means)
//! is an exact summation over those moments. A seeded Monte-Carlo simulator
//! ([`simulate`]) provides an independent check of the analytic path.

pub mod chain;
pub mod error;
pub mod frequency;
pub mod metrics;
pub mod schemes;
pub mod sim;

pub use chain::{
    build_transition_matrix, build_transition_matrix_from_counts, level_law,
    mixed_level_moments, stationary_distribution, LevelLaw, MixedLevelMoments, StationaryVector,
    TransitionMatrix, TransitionRule,
};
pub use error::{Error, Result};
pub use frequency::{
    build_gamma_quadrature, poisson_pmf, truncated_claim_counts, Portfolio, QuadratureRule,
    RateClass, ResidualLaw,
};
pub use metrics::{
    alt_fairness_measure, conditional_premium_means, conditional_pure_relativity_means,
    conditional_relativity_means, fairness_index,
    hmse, pure_relativity_variance, scheme_metrics, FixValue, PureRelativityVariance,
    SchemeMetrics,
};
pub use schemes::{
    bayesian_posterior_mean, debias_priori, pfos, pno, poi, ppos, pure_relativity_view,
    DescentInit, DescentStep, DescentTrace, IndividualizedScheme, PfosOptions, PremiumSchedule,
    ScaleAnchor, SharedScheme,
};
pub use sim::{simulate, simulate_many, Estimate, SimConfig, SimResult, StartingLevel};
