use std::collections::{BTreeMap, HashMap};

use pogit::data::{Design, ObservationTable};
use pogit::mcmc::{ChainConfig, PosteriorSamples, SamplesMeta};
use pogit::model::{Family, ModelSpec, Term};
use pogit::prediction::{effect_curve, predictive_intervals, sample_true_counts_given, CountDraws, EffectScale, Submodel};
use pogit::rng::stream_rng;

/// Enumerated conditional law of y given z under y ~ NB(mean λ, size θ),
/// z | y ~ Binomial(y, π). Pmfs by recursion, truncated at `top`.
fn negbin_conditional(lambda: f64, theta: f64, pi: f64, z: u64, top: u64) -> Vec<(u64, f64)> {
    let q = lambda / (theta + lambda);
    let mut nb = (theta / (theta + lambda)).powf(theta);
    let mut out = Vec::new();
    let mut log_choose = 0.0; // ln C(y, z), starting at y = z
    for y in 0..=top {
        if y >= z {
            if y > z {
                log_choose += (y as f64).ln() - ((y - z) as f64).ln();
            }
            let binom = (log_choose + z as f64 * pi.ln() + (y - z) as f64 * (1.0 - pi).ln()).exp();
            out.push((y, nb * binom));
        }
        nb *= (y as f64 + theta) / (y as f64 + 1.0) * q;
    }
    let total: f64 = out.iter().map(|p| p.1).sum();
    out.iter().map(|&(y, p)| (y, p / total)).collect()
}

#[test]
fn negbin_true_counts_follow_the_exact_conditional() {
    let (lambda, theta, pi, z) = (10.0, 2.0, 0.5, 4u64);
    let law = negbin_conditional(lambda, theta, pi, z, 2_000);
    let mean: f64 = law.iter().map(|&(y, p)| y as f64 * p).sum();
    let var: f64 = law.iter().map(|&(y, p)| (y as f64 - mean).powi(2) * p).sum();

    let mut rng = stream_rng(3, 0, 0);
    let n = 100_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| sample_true_counts_given(&[z], &[lambda], &[pi], Family::NegativeBinomial, theta, &mut rng)[0] as f64)
        .collect();
    let m = draws.iter().sum::<f64>() / n as f64;
    let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / n as f64;
    assert!((m - mean).abs() < 4.0 * (var / n as f64).sqrt(), "mc {m} vs exact {mean}");
    assert!((v / var - 1.0).abs() < 0.05, "mc var {v} vs exact {var}");
}

fn histogram(v: &[u64]) -> HashMap<u64, f64> {
    let mut h = HashMap::new();
    for &x in v {
        *h.entry(x).or_insert(0.0) += 1.0 / v.len() as f64;
    }
    h
}

#[test]
fn negbin_path_approaches_poisson_path() {
    let n = 100_000;
    let mut rng = stream_rng(5, 0, 0);
    let mut draw = |family, theta| {
        (0..n)
            .map(|_| sample_true_counts_given(&[4], &[10.0], &[0.5], family, theta, &mut rng)[0])
            .collect::<Vec<u64>>()
    };
    let a = histogram(&draw(Family::Poisson, 1.0));
    let b = histogram(&draw(Family::NegativeBinomial, 1e6));
    let keys: std::collections::BTreeSet<u64> = a.keys().chain(b.keys()).copied().collect();
    let tv: f64 = 0.5 * keys.iter().map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs()).sum::<f64>();
    assert!(tv < 0.02, "tv {tv}");
}

#[test]
fn narrower_intervals_nest_inside_wider_ones() {
    let mut rng = stream_rng(8, 0, 0);
    let n_obs = 5;
    let values: Vec<u64> = (0..400 * n_obs)
        .map(|k| sample_true_counts_given(&[k as u64 % 7], &[20.0], &[0.3], Family::Poisson, 1.0, &mut rng)[0])
        .collect();
    let draws = CountDraws { n_obs, values };
    let narrow = predictive_intervals(&draws, 0.5).unwrap();
    let wide = predictive_intervals(&draws, 0.95).unwrap();
    for (a, b) in narrow.iter().zip(&wide) {
        assert!(b.lower <= a.lower && a.upper <= b.upper);
    }
}

fn point_mass_samples(names: &[&str], values: &[f64], n_draws: usize, spec: &ModelSpec) -> PosteriorSamples {
    let meta = SamplesMeta {
        seed: 0,
        config: ChainConfig::default(),
        spec: spec.clone(),
        spec_hash: String::new(),
        data_hash: String::new(),
        sampler: "fixed".into(),
        chain_stats: Vec::new(),
    };
    let chain: Vec<f64> = (0..n_draws).flat_map(|_| values.iter().copied()).collect();
    PosteriorSamples::new(names.iter().map(|s| s.to_string()).collect(), vec![chain], meta).unwrap()
}

fn three_point_design() -> (Design, ModelSpec) {
    let mut covariates = BTreeMap::new();
    covariates.insert("x".to_string(), vec![-1.0, 0.0, 1.0]);
    covariates.insert("w".to_string(), vec![-1.0, 0.0, 1.0]);
    let table = ObservationTable {
        region_ids: vec!["a".into(), "b".into(), "c".into()],
        group_ids: vec!["all".into()],
        z: vec![1, 2, 3],
        region: vec![0, 1, 2],
        group: vec![0; 3],
        time: vec![0; 3],
        offset: vec![0.0; 3],
        complete: vec![false; 3],
        covariates,
    };
    let spec = ModelSpec {
        process_terms: vec![Term::new("x", 1)],
        reporting_terms: vec![Term::new("w", 1)],
        ..ModelSpec::default()
    };
    (Design::fit(&table, &spec).unwrap(), spec)
}

#[test]
fn effect_curve_of_known_linear_coefficient() {
    let (design, spec) = three_point_design();
    let c = 1.7;
    let s = point_mass_samples(&["alpha[0]", "alpha[1]"], &[0.3, c], 10, &spec);
    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let curve = effect_curve(&s, &design.process[0], Submodel::Process, &grid, EffectScale::Linear, 0.95, 0.0).unwrap();
    // The degree-1 basis on (−1, 0, 1) is x/√2.
    for (k, &x) in grid.iter().enumerate() {
        let want = c * x / 2f64.sqrt();
        assert!((curve.mean[k] - want).abs() < 1e-12);
        assert!((curve.lower[k] - want).abs() < 1e-12 && (curve.upper[k] - want).abs() < 1e-12);
    }
    assert!(curve.extrapolated.iter().all(|e| !e));
}

#[test]
fn zero_coefficients_give_flat_curves() {
    let (design, spec) = three_point_design();
    let s = point_mass_samples(&["beta[0]", "beta[1]"], &[0.0, 0.0], 10, &spec);
    let grid = [-3.0, 0.0, 3.0];
    let lin = effect_curve(&s, &design.reporting[0], Submodel::Reporting, &grid, EffectScale::Linear, 0.9, 0.5).unwrap();
    assert!(lin.mean.iter().all(|&v| v == 0.0));
    let prob =
        effect_curve(&s, &design.reporting[0], Submodel::Reporting, &grid, EffectScale::Probability, 0.9, 0.5).unwrap();
    assert!(prob.mean.iter().all(|&v| v == 0.5));
    assert_eq!(prob.extrapolated, vec![true, false, true]);
}
