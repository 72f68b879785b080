use std::sync::OnceLock;

use pogit::checking::{observed_stat, predictive_stat, prior_predictive_draws, PredictiveStat};
use pogit::data::{prepare, Design};
use pogit::mcmc::{run_chains, ChainConfig, PosteriorSamples};
use pogit::model::{CountDataset, ModelSpec, PriorSpec, Term};
use pogit::prediction::{
    effect_curve, group_totals, predict, quantile_type1, replicate_observed, sample_true_counts, CountDraws, EffectScale,
    PredictionConfig, Submodel,
};
use pogit::simulation::{simulate_dataset, simulate_tb_schema, SimulationConfig, TbSchemaConfig, TB_PROCESS_COVARIATES};

struct Fitted {
    data: CountDataset,
    design: Design,
    spec: ModelSpec,
    samples: PosteriorSamples,
}

fn lattice_spec(priors: PriorSpec) -> ModelSpec {
    ModelSpec {
        process_terms: vec![Term::new("x", 1)],
        reporting_terms: vec![Term::new("w", 1)],
        include_icar: true,
        include_iid_reporting: true,
        priors,
        ..ModelSpec::default()
    }
}

fn fitted() -> &'static Fitted {
    static FIT: OnceLock<Fitted> = OnceLock::new();
    FIT.get_or_init(|| {
        let (sim, _) = simulate_dataset(&SimulationConfig { seed: 3, ..SimulationConfig::default() }).unwrap();
        let spec = lattice_spec(PriorSpec { beta0_mean: 0.0, beta0_sd: 0.6, ..PriorSpec::default() });
        let (data, design) = prepare(&sim.table, &sim.graph, &spec).unwrap();
        let samples = run_chains(&data, &spec, &ChainConfig::experiment()).unwrap();
        Fitted { data, design, spec, samples }
    })
}

#[test]
fn replicate_intervals_cover_the_observed_counts() {
    let f = fitted();
    let (res, _) = predict(&f.samples, &f.data, &f.spec, &PredictionConfig::default()).unwrap();
    assert!(res.replicate_coverage >= 0.9, "{}", res.replicate_coverage);
    assert_eq!(res.observations.len(), f.data.n_obs());
}

#[test]
fn recovered_reporting_curve_increases_in_w() {
    let f = fitted();
    let grid: Vec<f64> = (0..=20).map(|k| -1.0 + 0.1 * k as f64).collect();
    let curve = effect_curve(
        &f.samples,
        &f.design.reporting[0],
        Submodel::Reporting,
        &grid,
        EffectScale::Probability,
        0.95,
        0.0,
    )
    .unwrap();
    assert!(curve.mean.windows(2).all(|w| w[1] > w[0]), "{:?}", curve.mean);
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn posterior_log_mse_is_far_below_prior_log_mse() {
    let f = fitted();
    let post = replicate_observed(&f.samples, &f.data, &f.spec, 1).unwrap();
    let prior = prior_predictive_draws(&f.spec, &f.data, 1000, 1).unwrap();
    let lp = predictive_stat(&post, &f.data.z, PredictiveStat::LogMse).unwrap();
    let lq = predictive_stat(&prior, &f.data.z, PredictiveStat::LogMse).unwrap();
    let gap = median(lq) - median(lp);
    assert!(gap > 2.0, "median gap {gap}");
}

#[test]
fn point_mass_prior_reproduces_fixed_parameter_replicates() {
    let f = fitted();
    let tiny = 1e-9;
    let spec = ModelSpec {
        include_icar: false,
        include_iid_reporting: false,
        priors: PriorSpec {
            alpha0_mean: 3.0,
            alpha0_sd: tiny,
            beta0_mean: 0.5,
            beta0_sd: tiny,
            coef_sd: tiny,
            ..PriorSpec::default()
        },
        ..f.spec.clone()
    };
    let draws = prior_predictive_draws(&spec, &f.data, 4000, 2).unwrap();
    let expected = 3f64.exp() / (1.0 + (-0.5f64).exp());
    for i in [0, 17, 99] {
        let col = draws.column(i);
        let m = col.iter().sum::<u64>() as f64 / col.len() as f64;
        let v = col.iter().map(|&c| (c as f64 - m).powi(2)).sum::<f64>() / col.len() as f64;
        // Poisson(πλ): mean and variance both equal πλ.
        assert!((m - expected).abs() < 4.0 * (expected / col.len() as f64).sqrt(), "{m} vs {expected}");
        assert!((v / expected - 1.0).abs() < 0.1);
    }
}

#[test]
fn wider_coefficient_prior_widens_replicates() {
    let f = fitted();
    let spread = |coef_sd: f64| {
        let spec = ModelSpec {
            priors: PriorSpec {
                alpha0_mean: 2.0,
                alpha0_sd: 0.1,
                coef_sd,
                ..PriorSpec::default()
            },
            ..f.spec.clone()
        };
        let draws = prior_predictive_draws(&spec, &f.data, 1000, 4).unwrap();
        let means = predictive_stat(&draws, &f.data.z, PredictiveStat::SampleMean).unwrap();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / means.len() as f64
    };
    let (narrow, wide) = (spread(1.0), spread(10.0));
    assert!(wide >= narrow, "{narrow} vs {wide}");
}

fn tb_spec(with_effects: bool) -> ModelSpec {
    let mut process: Vec<Term> = TB_PROCESS_COVARIATES[..3].iter().map(|c| Term::new(*c, 2)).collect();
    process.push(Term::new(TB_PROCESS_COVARIATES[3], 1));
    let mut priors = PriorSpec::tuberculosis();
    if !with_effects {
        priors.coef_sd = 1e-9;
        priors.beta0_sd = 1e-9;
    }
    ModelSpec {
        process_terms: process,
        reporting_terms: vec![Term::new("timeliness", 3)],
        include_icar: with_effects,
        include_iid_process: with_effects,
        include_iid_reporting: with_effects,
        priors,
        ..ModelSpec::default()
    }
}

#[test]
fn tuberculosis_intercept_prior_rules_out_huge_totals() {
    let (sim, _) = simulate_tb_schema(&TbSchemaConfig::default()).unwrap();
    let population: f64 = sim.table.offset.iter().map(|o| o.exp()).sum();

    // Only the intercept varies: totals above a million are rare.
    let spec = tb_spec(false);
    let (data, _) = prepare(&sim.table, &sim.graph, &spec).unwrap();
    let draws = prior_predictive_draws(&spec, &data, 1000, 5).unwrap();
    let small = (0..draws.n_draws()).filter(|&d| draws.row(d).iter().sum::<u64>() < 1_000_000).count();
    assert!(small as f64 >= 0.99 * draws.n_draws() as f64, "{small} of {}", draws.n_draws());

    // Full prior: the typical total stays a small fraction of the population.
    let spec = tb_spec(true);
    let (data, _) = prepare(&sim.table, &sim.graph, &spec).unwrap();
    let draws = prior_predictive_draws(&spec, &data, 1000, 5).unwrap();
    let totals: Vec<f64> = (0..draws.n_draws()).map(|d| draws.row(d).iter().sum::<u64>() as f64).collect();
    let m = median(totals);
    assert!(m < 0.01 * population, "median total {m} vs population {population}");
}

#[test]
fn true_count_draws_never_fall_below_the_record() {
    let f = fitted();
    let y = sample_true_counts(&f.samples, &f.data, &f.spec, 6).unwrap();
    for d in 0..y.n_draws() {
        assert!(y.row(d).iter().zip(&f.data.z).all(|(a, b)| a >= b));
    }
}

#[test]
fn observed_statistics_sit_inside_their_replicate_distribution() {
    let f = fitted();
    let post = replicate_observed(&f.samples, &f.data, &f.spec, 7).unwrap();
    for stat in [PredictiveStat::SampleMean, PredictiveStat::SampleVariance] {
        let mut reps = predictive_stat(&post, &f.data.z, stat).unwrap();
        reps.sort_by(f64::total_cmp);
        let obs = observed_stat(&f.data.z, stat);
        let (lo, hi) = (quantile_type1(&reps, 0.005), quantile_type1(&reps, 0.995));
        assert!(lo <= obs && obs <= hi, "{}: {obs} outside [{lo}, {hi}]", stat.name());
    }
}

#[test]
fn totals_come_from_summed_draws() {
    let f = fitted();
    // Skewed draws: a few large values on one observation per draw.
    let n_obs = f.data.n_obs();
    let z = &f.data.z;
    let values: Vec<u64> = (0..200)
        .flat_map(|d| (0..n_obs).map(move |i| z[i] + if (d + i) % 10 == 0 { 100 } else { 0 }))
        .collect();
    let y = CountDraws { n_obs, values };
    let totals = group_totals(&y, &f.data, &[0.5]);
    let sum_of_medians: f64 = (0..n_obs)
        .map(|i| {
            let mut c = y.column(i);
            c.sort_unstable();
            quantile_type1(&c, 0.5) as f64
        })
        .sum();
    let observed: u64 = z.iter().sum();
    assert_eq!(sum_of_medians, observed as f64);
    assert_eq!(totals.len(), 1);
    assert_eq!(totals[0].total[0], (observed + 100 * (n_obs as u64 / 10)) as f64);
}
