use proptest::prelude::*;

use pogit::dist::{binomial_ln_pmf, logistic, negbin_ln_pmf, poisson_ln_pmf};
use pogit::graph::AdjacencyGraph;
use pogit::model::{icar_quadratic_form, observation_log_likelihood, Family};
use pogit::prediction::{predictive_intervals, CountDraws};

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Thinning a Poisson(λ) by π gives Poisson(πλ): the marginal pmf equals
    /// the sum over latent true counts.
    #[test]
    fn poisson_marginal_equals_latent_sum(z in 0u64..15, lambda in 0.1f64..20.0, eta in -3.0f64..3.0) {
        let pi = logistic(eta);
        let terms: Vec<f64> = (z..z + 400)
            .map(|y| poisson_ln_pmf(y, lambda) + binomial_ln_pmf(z, y, pi))
            .collect();
        let latent = log_sum_exp(&terms);
        let marginal = observation_log_likelihood(z, lambda.ln(), eta, false, Family::Poisson, 1.0);
        prop_assert!((latent - marginal).abs() < 1e-9, "{latent} vs {marginal}");
    }

    #[test]
    fn negbin_marginal_equals_latent_sum(
        z in 0u64..10, lambda in 0.5f64..10.0, eta in -2.0f64..2.0, theta in 0.5f64..20.0,
    ) {
        let pi = logistic(eta);
        let terms: Vec<f64> = (z..z + 3000)
            .map(|y| negbin_ln_pmf(y, lambda, theta) + binomial_ln_pmf(z, y, pi))
            .collect();
        let latent = log_sum_exp(&terms);
        let marginal = observation_log_likelihood(z, lambda.ln(), eta, false, Family::NegativeBinomial, theta);
        prop_assert!((latent - marginal).abs() < 1e-7, "{latent} vs {marginal}");
    }

    #[test]
    fn complete_observations_ignore_reporting(z in 0u64..30, ln_lambda in -2.0f64..4.0, eta in -5.0f64..5.0) {
        let a = observation_log_likelihood(z, ln_lambda, eta, true, Family::Poisson, 1.0);
        let b = observation_log_likelihood(z, ln_lambda, 40.0, false, Family::Poisson, 1.0);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn wider_intervals_contain_narrower_ones(
        values in proptest::collection::vec(0u64..50, 100..300),
        narrow in 0.1f64..0.6,
        extra in 0.05f64..0.39,
    ) {
        let draws = CountDraws { n_obs: 1, values };
        let a = predictive_intervals(&draws, narrow).unwrap();
        let b = predictive_intervals(&draws, narrow + extra).unwrap();
        prop_assert!(b[0].lower <= a[0].lower && a[0].upper <= b[0].upper);
        prop_assert!(a[0].lower <= a[0].upper);
    }

    /// Adding a constant within a connected component leaves the ICAR
    /// quadratic form unchanged.
    #[test]
    fn icar_form_is_translation_invariant(
        phi in proptest::collection::vec(-3.0f64..3.0, 12),
        shift in -10.0f64..10.0,
    ) {
        let g = AdjacencyGraph::lattice(3, 4);
        let moved: Vec<f64> = phi.iter().map(|v| v + shift).collect();
        let (q0, q1) = (icar_quadratic_form(&phi, &g), icar_quadratic_form(&moved, &g));
        prop_assert!((q0 - q1).abs() < 1e-9 * (1.0 + q0));
    }
}
