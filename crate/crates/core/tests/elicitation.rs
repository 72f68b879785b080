use pogit::elicitation::{
    approximate_rate_distribution, average_of_normals, elicit_beta0_prior, AveragingScale, Coupling, RateEstimate,
    PROBABILITY_CLAMP,
};

const Z: f64 = 1.959963984540054;

fn who() -> Vec<RateEstimate> {
    vec![
        RateEstimate { point: 0.91, low: 0.78, high: 1.0 },
        RateEstimate { point: 0.84, low: 0.73, high: 0.99 },
        RateEstimate { point: 0.87, low: 0.75, high: 1.0 },
    ]
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn who_estimates_give_prior_near_two() {
    let p = elicit_beta0_prior(&who(), 100_000, 1, AveragingScale::Logit).unwrap();
    assert!((p.mean - 2.0).abs() <= 0.15, "mean {}", p.mean);
    assert!((p.sd - 0.4).abs() <= 0.1, "sd {}", p.sd);
}

#[test]
fn symmetric_logit_interval_has_closed_form_sd() {
    let a = approximate_rate_distribution(RateEstimate { point: 0.5, low: 0.269, high: 0.731 }).unwrap();
    assert_eq!(a.mean, 0.0);
    assert!((a.sd - 0.51).abs() < 0.01, "{}", a.sd);

    let (m, s) = (1.3, 0.7);
    let e = RateEstimate { point: logistic(m), low: logistic(m - Z * s), high: logistic(m + Z * s) };
    let a = approximate_rate_distribution(e).unwrap();
    assert_eq!(a.mean, (e.point / (1.0 - e.point)).ln());
    assert!((a.sd - s).abs() < 1e-6);
}

/// With an upper endpoint of 1 no logistic-Normal centred on logit(0.91)
/// hits both endpoints; the fit is the least-squares compromise.
#[test]
fn clamped_interval_is_least_squares_optimum() {
    let e = RateEstimate { point: 0.91, low: 0.78, high: 1.0 };
    let a = approximate_rate_distribution(e).unwrap();
    let loss = |sd: f64| {
        (logistic(a.mean - Z * sd) - e.low).powi(2) + (logistic(a.mean + Z * sd) - PROBABILITY_CLAMP).powi(2)
    };
    for d in [1e-3, 1e-2, 1e-1] {
        assert!(loss(a.sd) <= loss(a.sd + d) && loss(a.sd) <= loss(a.sd - d));
    }
    // The lower end is met closely; the upper end cannot get within 0.02
    // of 1 without pulling the lower end far below 0.78.
    assert!((a.fitted_low - e.low).abs() < 0.02, "{}", a.fitted_low);
    assert!((a.fitted_high - e.high).abs() < 0.04, "{}", a.fitted_high);
    assert!((a.fitted_high - e.high).abs() > 0.02);
}

#[test]
fn identical_components_reproduce_themselves() {
    let p = average_of_normals(&[(1.5, 0.4); 3], 100_000, 3, AveragingScale::Logit, Coupling::Comonotone).unwrap();
    assert!((p.mean - 1.5).abs() < 0.02);
    assert!((p.sd - 0.4).abs() < 0.02);
}

#[test]
fn independent_coupling_shrinks_the_spread() {
    let comps = [(1.0, 0.5), (2.0, 0.5), (3.0, 0.5)];
    let co = average_of_normals(&comps, 50_000, 1, AveragingScale::Logit, Coupling::Comonotone).unwrap();
    let ind = average_of_normals(&comps, 50_000, 1, AveragingScale::Logit, Coupling::Independent).unwrap();
    assert!((co.sd - 0.5).abs() < 0.02);
    assert!((ind.sd - 0.5 / 3f64.sqrt()).abs() < 0.02);
    assert!((co.mean - ind.mean).abs() < 0.02);
}

#[test]
fn result_does_not_depend_on_input_order() {
    let mut est = who();
    let a = elicit_beta0_prior(&est, 20_000, 9, AveragingScale::Logit).unwrap();
    est.reverse();
    let b = elicit_beta0_prior(&est, 20_000, 9, AveragingScale::Logit).unwrap();
    assert_eq!(a, b);
}

#[test]
fn probability_scale_averaging_is_selectable() {
    let l = elicit_beta0_prior(&who(), 20_000, 1, AveragingScale::Logit).unwrap();
    let p = elicit_beta0_prior(&who(), 20_000, 1, AveragingScale::Probability).unwrap();
    assert!(p.mean.is_finite() && p.sd > 0.0);
    assert_ne!(l, p);
}
