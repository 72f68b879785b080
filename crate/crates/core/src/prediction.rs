//! Corrected-count prediction from posterior draws.
//!
//! Every posterior draw `d` gets its own random streams, so results do not
//! depend on how draws are scheduled across threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TermBasis;
use crate::dist::{logistic, sample_gamma, sample_negbin, sample_poisson};
use crate::error::{Error, Result};
use crate::mcmc::PosteriorSamples;
use crate::model::{
    linear_predictor_lambda, reporting_probability, CountDataset, Family, ModelSpec, ParameterLayout,
    ParameterState,
};
use crate::rng::{stream_rng, DOMAIN_PREDICTION};

/// Count draws, one row of `n_obs` values per posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDraws {
    pub n_obs: usize,
    pub values: Vec<u64>,
}

impl CountDraws {
    pub fn n_draws(&self) -> usize {
        if self.n_obs == 0 {
            0
        } else {
            self.values.len() / self.n_obs
        }
    }

    pub fn row(&self, d: usize) -> &[u64] {
        &self.values[d * self.n_obs..(d + 1) * self.n_obs]
    }

    /// All draws of observation `i`.
    pub fn column(&self, i: usize) -> Vec<u64> {
        self.values.iter().skip(i).step_by(self.n_obs).copied().collect()
    }
}

/// Parameter states of every retained draw, chains concatenated.
pub fn posterior_states(
    samples: &PosteriorSamples,
    data: &CountDataset,
    spec: &ModelSpec,
) -> Result<Vec<ParameterState>> {
    let layout = ParameterLayout::new(spec, data);
    if layout.names() != samples.names.as_slice() {
        return Err(Error::Config(
            "posterior samples do not match the model specification and dataset".into(),
        ));
    }
    Ok(samples.draws().map(|d| layout.unpack(d, data, spec)).collect())
}

/// One draw of the true counts given `(λ, π)` for every observation.
///
/// Poisson: `y = z + Poisson((1−π)λ)`. Negative binomial: the Poisson–Gamma
/// mixing variable is drawn from its conditional `Gamma(θ+z, θ+πλ)` first,
/// then `y = z + Poisson((1−π)λu)`.
pub fn sample_true_counts_given<R: Rng + ?Sized>(
    z: &[u64],
    lambda: &[f64],
    pi: &[f64],
    family: Family,
    dispersion: f64,
    rng: &mut R,
) -> Vec<u64> {
    (0..z.len())
        .map(|i| {
            if pi[i] >= 1.0 {
                return z[i];
            }
            let rest = (1.0 - pi[i]) * lambda[i];
            let mean = match family {
                Family::Poisson => rest,
                Family::NegativeBinomial => {
                    let u = sample_gamma(rng, dispersion + z[i] as f64, dispersion + pi[i] * lambda[i]);
                    rest * u
                }
            };
            z[i] + sample_poisson(rng, mean)
        })
        .collect()
}

/// One replicate of the recorded counts given `(λ, π)`.
pub fn replicate_given<R: Rng + ?Sized>(
    lambda: &[f64],
    pi: &[f64],
    family: Family,
    dispersion: f64,
    rng: &mut R,
) -> Vec<u64> {
    (0..lambda.len())
        .map(|i| {
            let mean = pi[i] * lambda[i];
            match family {
                Family::Poisson => sample_poisson(rng, mean),
                Family::NegativeBinomial => sample_negbin(rng, mean, dispersion),
            }
        })
        .collect()
}

fn lambda_pi(state: &ParameterState, data: &CountDataset, spec: &ModelSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let lambda = linear_predictor_lambda(state, data, spec)?.iter().map(|v| v.exp()).collect();
    Ok((lambda, reporting_probability(state, data, spec)?))
}

fn per_draw<F>(states: &[ParameterState], data: &CountDataset, spec: &ModelSpec, seed: u64, stream: u64, f: F) -> Result<CountDraws>
where
    F: Fn(&ParameterState, &[f64], &[f64], &mut rand_chacha::ChaCha8Rng) -> Vec<u64> + Sync,
{
    let rows: Vec<Vec<u64>> = states
        .par_iter()
        .enumerate()
        .map(|(d, state)| {
            let (lambda, pi) = lambda_pi(state, data, spec)?;
            let mut rng = stream_rng(seed, DOMAIN_PREDICTION, 2 * d as u64 + stream);
            Ok(f(state, &lambda, &pi, &mut rng))
        })
        .collect::<Result<_>>()?;
    Ok(CountDraws {
        n_obs: data.n_obs(),
        values: rows.concat(),
    })
}

/// True-count draws `y`, one row per posterior draw.
pub fn sample_true_counts(
    samples: &PosteriorSamples,
    data: &CountDataset,
    spec: &ModelSpec,
    seed: u64,
) -> Result<CountDraws> {
    let states = posterior_states(samples, data, spec)?;
    per_draw(&states, data, spec, seed, 0, |s, lambda, pi, rng| {
        sample_true_counts_given(&data.z, lambda, pi, spec.family, s.dispersion, rng)
    })
}

/// Replicates `z̃` of the recorded counts, one row per posterior draw.
pub fn replicate_observed(
    samples: &PosteriorSamples,
    data: &CountDataset,
    spec: &ModelSpec,
    seed: u64,
) -> Result<CountDraws> {
    let states = posterior_states(samples, data, spec)?;
    per_draw(&states, data, spec, seed, 1, |s, lambda, pi, rng| {
        replicate_given(lambda, pi, spec.family, s.dispersion, rng)
    })
}

/// Inverse empirical CDF (`x_(⌈np⌉)`) of sorted data.
pub fn quantile_type1<T: Copy>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    let k = ((n as f64 * p).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

fn check_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("interval level {level} is outside (0, 1)")));
    }
    Ok((1.0 - level) / 2.0)
}

/// Equal-tailed intervals per observation; endpoints are draws, hence
/// integers for count draws.
pub fn predictive_intervals(draws: &CountDraws, level: f64) -> Result<Vec<Interval>> {
    let a = check_level(level)?;
    if draws.n_draws() < 100 {
        return Err(Error::Precondition(format!(
            "predictive intervals need at least 100 draws, got {}",
            draws.n_draws()
        )));
    }
    Ok((0..draws.n_obs)
        .into_par_iter()
        .map(|i| {
            let mut col = draws.column(i);
            col.sort_unstable();
            Interval {
                lower: quantile_type1(&col, a) as f64,
                upper: quantile_type1(&col, 1.0 - a) as f64,
            }
        })
        .collect())
}

/// Equal-tailed interval of real-valued draws.
pub fn interval_of(values: &[f64], level: f64) -> Result<Interval> {
    let a = check_level(level)?;
    if values.is_empty() {
        return Err(Error::Precondition("no draws".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(Interval {
        lower: quantile_type1(&v, a),
        upper: quantile_type1(&v, 1.0 - a),
    })
}

/// Fraction of `truth` inside the closed intervals.
pub fn coverage(intervals: &[Interval], truth: &[f64]) -> Result<f64> {
    if intervals.len() != truth.len() {
        return Err(Error::Argument(format!(
            "{} intervals but {} true values",
            intervals.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Argument("coverage of an empty set".into()));
    }
    let hits = intervals.iter().zip(truth).filter(|(iv, &t)| iv.contains(t)).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Submodel {
    Process,
    Reporting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectScale {
    /// The polynomial term alone, on the linear-predictor scale.
    Linear,
    /// `logistic(β₀ + g(x))`; reporting terms only.
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve {
    pub covariate: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Grid points outside the guarded training range.
    pub extrapolated: Vec<bool>,
}

/// Posterior mean and equal-tailed credible band of a fitted polynomial
/// effect over `grid`. Points further than `guard × (training range)`
/// outside the training range are flagged.
#[allow(clippy::too_many_arguments)]
pub fn effect_curve(
    samples: &PosteriorSamples,
    term: &TermBasis,
    submodel: Submodel,
    grid: &[f64],
    scale: EffectScale,
    level: f64,
    guard: f64,
) -> Result<EffectCurve> {
    check_level(level)?;
    let prefix = match submodel {
        Submodel::Process => "alpha",
        Submodel::Reporting => "beta",
    };
    if scale == EffectScale::Probability && submodel != Submodel::Reporting {
        return Err(Error::Argument("probability scale applies to reporting terms only".into()));
    }
    let idx: Vec<usize> = term
        .coef_range()
        .map(|k| samples.index_of(&format!("{prefix}[{k}]")))
        .collect::<Result<_>>()?;
    let intercept = samples.index_of(&format!("{prefix}[0]"))?;
    let basis: Vec<Vec<f64>> = term.basis.evaluate(grid);
    let (lo, hi) = term.basis.training_range();
    let pad = guard * (hi - lo);
    let mut curve = EffectCurve {
        covariate: term.term.covariate.clone(),
        x: grid.to_vec(),
        mean: Vec::with_capacity(grid.len()),
        lower: Vec::with_capacity(grid.len()),
        upper: Vec::with_capacity(grid.len()),
        extrapolated: grid.iter().map(|&x| x < lo - pad || x > hi + pad).collect(),
    };
    for b in &basis {
        let values: Vec<f64> = samples
            .draws()
            .map(|d| {
                let f: f64 = idx.iter().zip(b).map(|(&j, v)| d[j] * v).sum();
                match scale {
                    EffectScale::Linear => f,
                    EffectScale::Probability => logistic(d[intercept] + f),
                }
            })
            .collect();
        let iv = interval_of(&values, level)?;
        curve.mean.push(values.iter().sum::<f64>() / values.len() as f64);
        curve.lower.push(iv.lower);
        curve.upper.push(iv.upper);
    }
    if curve.extrapolated.iter().any(|&e| e) {
        log::warn!("effect curve for '{}' extrapolates beyond the training range", curve.covariate);
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTotal {
    /// Time label of the group (e.g. the year).
    pub time: i64,
    pub observed: u64,
    /// Quantiles of the total unreported count `Σ(y − z)`, one per level.
    pub unreported: Vec<f64>,
    /// Quantiles of the total true count `Σy`.
    pub total: Vec<f64>,
}

/// Per-time totals computed from summed draws, then summarised.
pub fn group_totals(y: &CountDraws, data: &CountDataset, levels: &[f64]) -> Vec<GroupTotal> {
    let mut times: Vec<i64> = data.units.iter().map(|u| u.time).collect();
    times.sort_unstable();
    times.dedup();
    times
        .into_iter()
        .map(|t| {
            let members: Vec<usize> = (0..data.n_obs()).filter(|&i| data.units[i].time == t).collect();
            let observed: u64 = members.iter().map(|&i| data.z[i]).sum();
            let mut totals: Vec<u64> = (0..y.n_draws())
                .map(|d| {
                    let row = y.row(d);
                    members.iter().map(|&i| row[i]).sum()
                })
                .collect();
            totals.sort_unstable();
            GroupTotal {
                time: t,
                observed,
                unreported: levels
                    .iter()
                    .map(|&p| quantile_type1(&totals, p) as f64 - observed as f64)
                    .collect(),
                total: levels.iter().map(|&p| quantile_type1(&totals, p) as f64).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionConfig {
    /// Quantile levels for per-observation true counts.
    pub quantiles: Vec<f64>,
    /// Quantile levels for group totals.
    pub total_quantiles: Vec<f64>,
    /// Level of the replicate and reporting-rate intervals.
    pub interval_level: f64,
    pub seed: u64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            quantiles: vec![0.025, 0.5, 0.975],
            total_quantiles: vec![0.05, 0.5, 0.95],
            interval_level: 0.95,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationPrediction {
    pub z: u64,
    /// True-count quantiles at [`PredictionConfig::quantiles`].
    pub y_quantiles: Vec<f64>,
    pub y_mean: f64,
    pub pi_mean: f64,
    pub pi_lower: f64,
    pub pi_upper: f64,
    pub replicate_lower: f64,
    pub replicate_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub config: PredictionConfig,
    pub observations: Vec<ObservationPrediction>,
    pub totals: Vec<GroupTotal>,
    /// Fraction of observed counts inside their replicate intervals.
    pub replicate_coverage: f64,
}

/// Full prediction summary: true-count quantiles, reporting rates,
/// replicate intervals and per-time totals.
pub fn predict(
    samples: &PosteriorSamples,
    data: &CountDataset,
    spec: &ModelSpec,
    config: &PredictionConfig,
) -> Result<(PredictionResult, CountDraws)> {
    for &p in config.quantiles.iter().chain(&config.total_quantiles) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Argument(format!("quantile level {p} is outside [0, 1]")));
        }
    }
    let states = posterior_states(samples, data, spec)?;
    let y = sample_true_counts(samples, data, spec, config.seed)?;
    let rep = replicate_observed(samples, data, spec, config.seed)?;
    let rep_iv = predictive_intervals(&rep, config.interval_level)?;
    let pis: Vec<Vec<f64>> = states
        .par_iter()
        .map(|s| reporting_probability(s, data, spec))
        .collect::<Result<_>>()?;
    let observations = (0..data.n_obs())
        .into_par_iter()
        .map(|i| {
            let mut col = y.column(i);
            let y_mean = col.iter().sum::<u64>() as f64 / col.len() as f64;
            col.sort_unstable();
            let pi: Vec<f64> = pis.iter().map(|p| p[i]).collect();
            let pi_iv = interval_of(&pi, config.interval_level)?;
            Ok(ObservationPrediction {
                z: data.z[i],
                y_quantiles: config.quantiles.iter().map(|&p| quantile_type1(&col, p) as f64).collect(),
                y_mean,
                pi_mean: pi.iter().sum::<f64>() / pi.len() as f64,
                pi_lower: pi_iv.lower,
                pi_upper: pi_iv.upper,
                replicate_lower: rep_iv[i].lower,
                replicate_upper: rep_iv[i].upper,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let zf: Vec<f64> = data.z.iter().map(|&z| z as f64).collect();
    let result = PredictionResult {
        config: config.clone(),
        totals: group_totals(&y, data, &config.total_quantiles),
        replicate_coverage: coverage(&rep_iv, &zf)?,
        observations,
    };
    Ok((result, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_reporting_returns_observed() {
        let mut rng = stream_rng(1, 0, 0);
        let y = sample_true_counts_given(&[3, 7], &[10.0, 10.0], &[1.0, 1.0], Family::Poisson, 1.0, &mut rng);
        assert_eq!(y, vec![3, 7]);
    }

    #[test]
    fn unreported_mean_matches_poisson() {
        let mut rng = stream_rng(2, 0, 0);
        let n = 100_000;
        let total: u64 = (0..n)
            .map(|_| sample_true_counts_given(&[4], &[10.0], &[0.5], Family::Poisson, 1.0, &mut rng)[0] - 4)
            .sum();
        assert!((total as f64 / n as f64 - 5.0).abs() < 0.1);
    }

    #[test]
    fn replicate_mean_and_zero_reporting() {
        let mut rng = stream_rng(3, 0, 0);
        let n = 100_000;
        let total: u64 = (0..n)
            .map(|_| replicate_given(&[10.0], &[0.5], Family::Poisson, 1.0, &mut rng)[0])
            .sum();
        assert!((total as f64 / n as f64 - 5.0).abs() < 0.1);
        assert_eq!(replicate_given(&[10.0; 5], &[0.0; 5], Family::Poisson, 1.0, &mut rng), vec![0; 5]);
    }

    #[test]
    fn intervals_follow_order_statistics() {
        let draws = CountDraws {
            n_obs: 1,
            values: (0..100).collect(),
        };
        let iv = predictive_intervals(&draws, 0.9).unwrap()[0];
        assert!((iv.lower - 5.0).abs() <= 1.0 && (iv.upper - 94.0).abs() <= 1.0, "{iv:?}");
        let constant = CountDraws {
            n_obs: 1,
            values: vec![7; 200],
        };
        assert_eq!(predictive_intervals(&constant, 0.95).unwrap()[0], Interval { lower: 7.0, upper: 7.0 });
        assert!(matches!(predictive_intervals(&draws, 1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn coverage_counts() {
        let iv = vec![Interval { lower: 0.0, upper: 1.0 }; 4];
        assert_eq!(coverage(&iv, &[0.0, 1.0, 0.5, 0.2]).unwrap(), 1.0);
        assert_eq!(coverage(&iv, &[2.0, 3.0, -1.0, 9.0]).unwrap(), 0.0);
        assert_eq!(coverage(&iv, &[0.5, 3.0, 1.0, 9.0]).unwrap(), 0.5);
    }
}
