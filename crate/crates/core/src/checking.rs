//! Prior and posterior predictive checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_gamma, sample_half_normal, standard_normal};
use crate::error::{Error, Result};
use crate::model::{linear_predictor_lambda, reporting_probability, CountDataset, ModelSpec, ParameterState};
use crate::prediction::{replicate_given, CountDraws};
use crate::rng::{stream_rng, DOMAIN_PRIOR_PREDICTIVE};
use crate::simulation::IcarSpectrum;

/// Stand-in for `ln 0` when replicates match the data exactly.
pub const LOG_MSE_SENTINEL: f64 = -708.3964185322641;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictiveStat {
    SampleMean,
    /// Unbiased (n − 1) sample variance.
    SampleVariance,
    /// Natural log of the mean squared difference from the observed counts.
    LogMse,
}

impl PredictiveStat {
    pub const ALL: [PredictiveStat; 3] = [Self::SampleMean, Self::SampleVariance, Self::LogMse];

    pub fn name(self) -> &'static str {
        match self {
            Self::SampleMean => "sample_mean",
            Self::SampleVariance => "sample_variance",
            Self::LogMse => "log_mse",
        }
    }

    fn apply(self, draw: &[u64], observed: &[u64]) -> f64 {
        let n = draw.len() as f64;
        match self {
            Self::SampleMean => draw.iter().sum::<u64>() as f64 / n,
            Self::SampleVariance => {
                let m = draw.iter().sum::<u64>() as f64 / n;
                draw.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / (n - 1.0)
            }
            Self::LogMse => {
                let mse = draw
                    .iter()
                    .zip(observed)
                    .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                    .sum::<f64>()
                    / n;
                if mse > 0.0 {
                    mse.ln()
                } else {
                    LOG_MSE_SENTINEL
                }
            }
        }
    }
}

/// The statistic of every replicate draw.
pub fn predictive_stat(replicates: &CountDraws, observed: &[u64], stat: PredictiveStat) -> Result<Vec<f64>> {
    if replicates.n_obs != observed.len() {
        return Err(Error::Argument(format!(
            "replicates have {} observations, data has {}",
            replicates.n_obs,
            observed.len()
        )));
    }
    if replicates.n_draws() == 0 {
        return Err(Error::Precondition("no replicate draws".into()));
    }
    if stat == PredictiveStat::SampleVariance && observed.len() < 2 {
        return Err(Error::Precondition("sample variance needs at least 2 observations".into()));
    }
    Ok((0..replicates.n_draws())
        .map(|d| stat.apply(replicates.row(d), observed))
        .collect())
}

/// The statistic of the observed data itself (log-MSE is the sentinel).
pub fn observed_stat(observed: &[u64], stat: PredictiveStat) -> f64 {
    stat.apply(observed, observed)
}

/// One parameter state drawn from the prior. `φ` comes from the proper
/// Gaussian on the sum-to-zero subspace of the graph Laplacian.
pub fn sample_prior_state<R: rand::Rng + ?Sized>(
    spec: &ModelSpec,
    data: &CountDataset,
    spectrum: &IcarSpectrum,
    rng: &mut R,
) -> ParameterState {
    let p = &spec.priors;
    let mut state = ParameterState::initial(spec, data);
    state.alpha[0] = p.alpha0_mean + p.alpha0_sd * standard_normal(rng);
    for v in state.alpha.iter_mut().skip(1) {
        *v = p.coef_sd * standard_normal(rng);
    }
    state.beta[0] = p.beta0_mean + p.beta0_sd * standard_normal(rng);
    for v in state.beta.iter_mut().skip(1) {
        *v = p.coef_sd * standard_normal(rng);
    }
    state.sigma = sample_half_normal(rng, p.halfnormal_scale_sigma);
    state.nu = sample_half_normal(rng, p.halfnormal_scale_nu);
    state.epsilon = sample_half_normal(rng, p.halfnormal_scale_epsilon);
    state.dispersion = sample_gamma(rng, p.dispersion_shape, p.dispersion_rate);
    if spec.include_icar {
        state.phi = spectrum.sample(state.nu, rng);
    }
    if spec.include_iid_process {
        for v in state.theta_re.iter_mut() {
            *v = state.sigma * standard_normal(rng);
        }
    }
    if spec.include_iid_reporting {
        for v in state.gamma_re.iter_mut() {
            *v = state.epsilon * standard_normal(rng);
        }
    }
    state
}

/// `n` prior predictive replicates of the recorded counts.
pub fn prior_predictive_draws(spec: &ModelSpec, data: &CountDataset, n: usize, seed: u64) -> Result<CountDraws> {
    spec.validate()?;
    let spectrum = IcarSpectrum::new(&data.graph);
    let rows: Vec<Vec<u64>> = (0..n)
        .into_par_iter()
        .map(|d| {
            let mut rng = stream_rng(seed, DOMAIN_PRIOR_PREDICTIVE, d as u64);
            let state = sample_prior_state(spec, data, &spectrum, &mut rng);
            // Clamp so an extreme prior draw cannot overflow the sampler.
            let lambda: Vec<f64> = linear_predictor_lambda(&state, data, spec)?
                .iter()
                .map(|v| v.min(40.0).exp())
                .collect();
            let pi = reporting_probability(&state, data, spec)?;
            Ok(replicate_given(&lambda, &pi, spec.family, state.dispersion, &mut rng))
        })
        .collect::<Result<_>>()?;
    Ok(CountDraws {
        n_obs: data.n_obs(),
        values: rows.concat(),
    })
}
