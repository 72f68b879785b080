//! Validation sampler that keeps the true counts `y` as explicit latent
//! variables instead of marginalising them out.
//!
//! Restricted to Poisson models without random effects. `y` is drawn exactly
//! from its full conditional `z + Poisson((1−π)λ)`, then each coefficient is
//! updated by an axis-aligned slice step given `y`.

use rayon::prelude::*;

use super::chains::{initial_state, ChainConfig, ChainStats, PosteriorSamples, SamplesMeta};
use super::slice::{slice_update_scalar, AdaptiveWidth, Bounds};
use crate::dist::{ln_logistic, ln_one_minus_logistic, logistic, normal_ln_pdf, sample_poisson};
use crate::error::{Error, Result};
use crate::hash::{dataset_digest, json_digest};
use crate::model::{fixed_eta, fixed_log_lambda, CountDataset, Family, ModelSpec};
use crate::rng::{stream_rng, DOMAIN_LATENT_CHAINS};

fn run_one(data: &CountDataset, spec: &ModelSpec, config: &ChainConfig, chain: usize) -> Result<(Vec<f64>, ChainStats)> {
    let mut rng = stream_rng(config.seed, DOMAIN_LATENT_CHAINS, chain as u64);
    let state = initial_state(data, spec, config.init, &mut rng)?;
    let (mut alpha, mut beta) = (state.alpha, state.beta);
    let (na, nb) = (alpha.len(), beta.len());
    let n = data.n_obs();
    let p = &spec.priors;
    let mut widths = vec![AdaptiveWidth::new(0.5); na + nb];
    let mut y = vec![0u64; n];
    let mut out = Vec::with_capacity(config.retained_per_chain() * (na + nb));
    let mut hits = 0u64;
    let prior = |k: usize, v: f64, intercept: (f64, f64)| {
        if k == 0 {
            normal_ln_pdf(v, intercept.0, intercept.1)
        } else {
            normal_ln_pdf(v, 0.0, p.coef_sd)
        }
    };
    for it in 0..config.n_iterations {
        if it == config.n_burnin {
            widths.iter_mut().for_each(AdaptiveWidth::freeze);
        }
        let ll = fixed_log_lambda(&alpha, data);
        let eta = fixed_eta(&beta, data);
        for i in 0..n {
            y[i] = if data.complete[i] {
                data.z[i]
            } else {
                data.z[i] + sample_poisson(&mut rng, (1.0 - logistic(eta[i])) * ll[i].exp())
            };
        }
        // α given y: Poisson regression on the true counts.
        let mut ll = ll;
        for k in 0..na {
            let col: Vec<f64> = (0..n).map(|i| if k == 0 { 1.0 } else { data.x[(i, k - 1)] }).collect();
            let cur = alpha[k];
            let f = |v: f64| {
                let d = v - cur;
                let mut lp = prior(k, v, (p.alpha0_mean, p.alpha0_sd));
                for i in 0..n {
                    let l = ll[i] + d * col[i];
                    lp += y[i] as f64 * l - l.exp();
                }
                lp
            };
            let step = slice_update_scalar(cur, f, widths[k].width, Bounds::UNBOUNDED, config.max_steps, &mut rng);
            widths[k].record(&step);
            hits += step.hit_step_limit as u64;
            let d = step.value - cur;
            alpha[k] = step.value;
            for i in 0..n {
                ll[i] += d * col[i];
            }
        }
        // β given y and z: Binomial regression on incompletely reported units.
        let mut eta = eta;
        for k in 0..nb {
            let col: Vec<f64> = (0..n).map(|i| if k == 0 { 1.0 } else { data.w[(i, k - 1)] }).collect();
            let cur = beta[k];
            let f = |v: f64| {
                let d = v - cur;
                let mut lp = prior(k, v, (p.beta0_mean, p.beta0_sd));
                for i in (0..n).filter(|&i| !data.complete[i]) {
                    let e = eta[i] + d * col[i];
                    let z = data.z[i] as f64;
                    lp += z * ln_logistic(e) + (y[i] as f64 - z) * ln_one_minus_logistic(e);
                }
                lp
            };
            let w = &mut widths[na + k];
            let step = slice_update_scalar(cur, f, w.width, Bounds::UNBOUNDED, config.max_steps, &mut rng);
            w.record(&step);
            hits += step.hit_step_limit as u64;
            let d = step.value - cur;
            beta[k] = step.value;
            for i in 0..n {
                eta[i] += d * col[i];
            }
        }
        if it < config.n_burnin && (it + 1) % config.width_interval == 0 {
            widths.iter_mut().for_each(AdaptiveWidth::adapt);
        }
        if it >= config.n_burnin && (it - config.n_burnin) % config.thin == 0 {
            out.extend_from_slice(&alpha);
            out.extend_from_slice(&beta);
        }
    }
    Ok((
        out,
        ChainStats {
            step_limit_hits: hits,
            afss_refreshes: 0,
            kernel_at_freeze: None,
            kernel_changes_after_freeze: 0,
        },
    ))
}

/// Runs the latent-count validation sampler. Parameter names match the
/// coefficient names of [`run_chains`](super::run_chains).
pub fn run_latent_chains(data: &CountDataset, spec: &ModelSpec, config: &ChainConfig) -> Result<PosteriorSamples> {
    spec.validate()?;
    config.validate()?;
    if spec.family != Family::Poisson || spec.include_icar || spec.include_iid_process || spec.include_iid_reporting {
        return Err(Error::Config(
            "the latent-count sampler supports Poisson models without random effects only".into(),
        ));
    }
    let results: Vec<_> = (0..config.n_chains)
        .into_par_iter()
        .map(|k| run_one(data, spec, config, k))
        .collect::<Result<_>>()?;
    let (chains, chain_stats): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let names = (0..spec.n_alpha())
        .map(|k| format!("alpha[{k}]"))
        .chain((0..spec.n_beta()).map(|k| format!("beta[{k}]")))
        .collect();
    let meta = SamplesMeta {
        seed: config.seed,
        config: config.clone(),
        spec: spec.clone(),
        spec_hash: json_digest(spec),
        data_hash: dataset_digest(data),
        sampler: "latent".into(),
        chain_stats,
    };
    PosteriorSamples::new(names, chains, meta)
}
