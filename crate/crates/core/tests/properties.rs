//! Property tests for the structural invariants: quadrature exactness,
//! stochastic-matrix sanity, stationary fixed points, stochastic ordering,
//! and scale invariance of the metrics.


use bms_core::{
    build_gamma_quadrature, build_transition_matrix, fairness_index, hmse, mixed_level_moments,
    poisson_pmf, ppos, stationary_distribution, Portfolio, ResidualLaw, TransitionRule,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadrature_moments_match_closed_form(psi in 0.1f64..=2.0) {
        let law = ResidualLaw::new(psi).unwrap();
        let quad = build_gamma_quadrature(&law, 64).unwrap();
        for order in 0u32..=4 {
            let numeric = quad.integrate(|t| t.powi(order as i32));
            prop_assert!(
                (numeric - law.raw_moment(order)).abs() <= 1e-8,
                "order {} moment: {} vs {}", order, numeric, law.raw_moment(order)
            );
        }
    }

    #[test]
    fn poisson_pmf_sums_to_one(mean in 1e-3f64..=50.0) {
        // Truncate where the remaining tail is below 1e-14.
        let n_max = (mean + 14.0 * mean.sqrt() + 40.0).ceil() as u64;
        let total: f64 = (0..=n_max).map(|n| poisson_pmf(mean, n).unwrap()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "sum {}", total);
    }

    #[test]
    fn transition_matrices_are_stochastic_with_fixed_points(
        mu in 1e-4f64..=40.0,
        levels in 2usize..=20,
        penalty in 1usize..=3,
    ) {
        let rule = TransitionRule::new(levels, penalty).unwrap();
        let matrix = build_transition_matrix(mu, &rule).unwrap();
        prop_assert!(matrix.max_row_sum_error() <= 1e-12);
        let pi = stationary_distribution(&matrix).unwrap();
        prop_assert!(pi.residual(&matrix) <= 1e-10);
        let mass: f64 = pi.probabilities().iter().sum();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
        prop_assert!(pi.probabilities().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn higher_frequency_occupies_higher_levels(
        mu in 0.01f64..=5.0,
        bump in 1.05f64..=4.0,
        levels in 4usize..=15,
        penalty in 1usize..=3,
    ) {
        // Stochastic ordering of the stationary law in the expected frequency.
        let rule = TransitionRule::new(levels, penalty).unwrap();
        let low = stationary_distribution(&build_transition_matrix(mu, &rule).unwrap()).unwrap();
        let high =
            stationary_distribution(&build_transition_matrix(mu * bump, &rule).unwrap()).unwrap();
        let mut tail_low = 0.0;
        let mut tail_high = 0.0;
        for level in (0..levels).rev() {
            tail_low += low.probabilities()[level];
            tail_high += high.probabilities()[level];
            prop_assert!(
                tail_high >= tail_low - 1e-9,
                "tail from level {}: {} < {}", level + 1, tail_high, tail_low
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn metrics_are_scale_invariant(
        scale in 0.05f64..=20.0,
        psi in 0.3f64..=1.2,
        rate in 0.1f64..=1.5,
    ) {
        let portfolio = Portfolio::equally_weighted(&[rate, rate * 2.0, rate * 3.0], psi).unwrap();
        let rule = TransitionRule::new(8, 2).unwrap();
        let quad = build_gamma_quadrature(portfolio.residual(), 32).unwrap();
        let moments = mixed_level_moments(&portfolio, &rule, &quad).unwrap();
        let scheme = ppos(&moments, &portfolio).unwrap();
        let scaled = scheme.rescaled(scale);

        for class in 1..=3 {
            for level in 1..=8 {
                use bms_core::PremiumSchedule;
                let a = scheme.premium(class, level);
                let b = scaled.premium(class, level);
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
        let h0 = hmse(&scheme, &moments, &portfolio);
        let h1 = hmse(&scaled, &moments, &portfolio);
        prop_assert!((h0 - h1).abs() <= 1e-10 * h0.max(1.0));
        let f0 = fairness_index(&scheme, &moments, &portfolio).value().unwrap();
        let f1 = fairness_index(&scaled, &moments, &portfolio).value().unwrap();
        prop_assert!((f0 - f1).abs() <= 1e-10);
    }
}
