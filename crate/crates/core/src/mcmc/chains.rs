use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::afss::AfssConfig;
use super::sampler::{ChainSampler, KernelSnapshot};
use crate::dist::standard_normal;
use crate::error::{Error, Result};
use crate::hash::{dataset_digest, json_digest};
use crate::model::{log_posterior, log_prior, marginal_log_likelihood, CountDataset, ModelSpec, ParameterLayout, ParameterState};
use crate::rng::{stream_rng, DOMAIN_CHAINS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Coefficients at prior means, effects at 0, scales at 0.5.
    #[default]
    PriorMeans,
    /// Prior-mean start plus per-chain random jitter.
    Dispersed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    /// Iterations between AFSS factor refreshes during burn-in.
    pub adaptation_interval: usize,
    /// Iterations between slice-width adaptations during burn-in.
    pub width_interval: usize,
    pub max_steps: u32,
    pub init: InitPolicy,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iterations: 20_000,
            n_burnin: 10_000,
            thin: 2,
            seed: 1,
            n_chains: 4,
            adaptation_interval: 200,
            width_interval: 50,
            max_steps: 100,
            init: InitPolicy::PriorMeans,
        }
    }
}

impl ChainConfig {
    /// Per-cell experiment default: 2 chains of 8K iterations.
    pub fn experiment() -> Self {
        Self {
            n_iterations: 8_000,
            n_burnin: 4_000,
            n_chains: 2,
            ..Self::default()
        }
    }

    /// The long opt-in run: 4 chains of 800K iterations.
    pub fn full_scale() -> Self {
        Self {
            n_iterations: 800_000,
            n_burnin: 400_000,
            thin: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_burnin >= self.n_iterations {
            return Err(Error::Config(format!(
                "n_burnin ({}) must be below n_iterations ({})",
                self.n_burnin, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        if self.adaptation_interval == 0 || self.width_interval == 0 {
            return Err(Error::Config("adaptation intervals must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.n_iterations - self.n_burnin).div_ceil(self.thin)
    }

    pub(crate) fn afss(&self) -> AfssConfig {
        AfssConfig {
            adaptation_interval: self.adaptation_interval,
            width_interval: self.width_interval,
            max_steps: self.max_steps,
            ..AfssConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    /// Slice updates whose stepping-out exhausted its budget.
    pub step_limit_hits: u64,
    pub afss_refreshes: usize,
    pub kernel_at_freeze: Option<KernelSnapshot>,
    /// Post-burn-in iterations whose kernel differed from the frozen one.
    pub kernel_changes_after_freeze: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesMeta {
    pub seed: u64,
    pub config: ChainConfig,
    pub spec: ModelSpec,
    pub spec_hash: String,
    pub data_hash: String,
    pub sampler: String,
    pub chain_stats: Vec<ChainStats>,
}

/// Retained draws of every chain, row-major per chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    pub chains: Vec<Vec<f64>>,
    pub meta: SamplesMeta,
}

impl PosteriorSamples {
    pub fn new(names: Vec<String>, chains: Vec<Vec<f64>>, meta: SamplesMeta) -> Result<Self> {
        let p = names.len();
        if p == 0 {
            return Err(Error::Data("samples have no parameters".into()));
        }
        if let Some(c) = chains.iter().position(|c| c.len() % p != 0) {
            return Err(Error::Data(format!("chain {c} is not a whole number of draws")));
        }
        if chains.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(Error::Data("chains have unequal retained lengths".into()));
        }
        Ok(Self { names, chains, meta })
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    /// Retained draws per chain.
    pub fn n_draws(&self) -> usize {
        self.chains.first().map_or(0, |c| c.len() / self.n_params())
    }

    pub fn total_draws(&self) -> usize {
        self.n_draws() * self.n_chains()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Argument(format!("no parameter named '{name}'")))
    }

    pub fn draw(&self, chain: usize, k: usize) -> &[f64] {
        let p = self.n_params();
        &self.chains[chain][k * p..(k + 1) * p]
    }

    /// All draws in chain-major order.
    pub fn draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.chains.iter().flat_map(move |c| c.chunks_exact(self.n_params()))
    }

    /// Per-chain traces of one parameter.
    pub fn traces(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let j = self.index_of(name)?;
        let p = self.n_params();
        Ok(self
            .chains
            .iter()
            .map(|c| c.iter().skip(j).step_by(p).copied().collect())
            .collect())
    }

    /// All draws of one parameter, chains concatenated.
    pub fn pooled(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.traces(name)?.concat())
    }
}

fn jitter<R: Rng>(state: &mut ParameterState, rng: &mut R) {
    state.alpha[0] += 0.5 * standard_normal(rng);
    state.beta[0] += 0.5 * standard_normal(rng);
    for v in state.alpha.iter_mut().skip(1).chain(state.beta.iter_mut().skip(1)) {
        *v += 0.1 * standard_normal(rng);
    }
    for v in state.phi.iter_mut().chain(&mut state.theta_re).chain(&mut state.gamma_re) {
        *v += 0.05 * standard_normal(rng);
    }
    state.sigma *= (0.3 * standard_normal(rng)).exp();
    state.nu *= (0.3 * standard_normal(rng)).exp();
    state.epsilon *= (0.3 * standard_normal(rng)).exp();
    state.dispersion *= (0.3 * standard_normal(rng)).exp();
}

fn init_dump(state: &ParameterState, data: &CountDataset, spec: &ModelSpec) -> String {
    let ll = marginal_log_likelihood(state, data, spec).map_or_else(|e| e.to_string(), |v| v.to_string());
    let lp = log_prior(state, data, spec).map_or_else(|e| e.to_string(), |v| v.to_string());
    format!(
        "log-likelihood: {ll}\nlog-prior: {lp}\nalpha: {:?}\nbeta: {:?}\nsigma={} nu={} epsilon={} dispersion={}",
        state.alpha, state.beta, state.sigma, state.nu, state.epsilon, state.dispersion
    )
}

pub(crate) fn initial_state<R: Rng>(
    data: &CountDataset,
    spec: &ModelSpec,
    policy: InitPolicy,
    rng: &mut R,
) -> Result<ParameterState> {
    let mut state = ParameterState::initial(spec, data);
    if policy == InitPolicy::Dispersed {
        jitter(&mut state, rng);
        data.graph.center_per_component(&mut state.phi);
    }
    let lp = log_posterior(&state, data, spec);
    match lp {
        Ok(v) if v.is_finite() => Ok(state),
        Ok(v) => Err(Error::Initialization {
            message: format!("initial log-posterior is {v}"),
            dump: init_dump(&state, data, spec),
        }),
        Err(e) => Err(Error::Initialization {
            message: e.to_string(),
            dump: init_dump(&state, data, spec),
        }),
    }
}

fn run_one(
    data: &CountDataset,
    spec: &ModelSpec,
    config: &ChainConfig,
    layout: &ParameterLayout,
    chain: usize,
) -> Result<(Vec<f64>, ChainStats)> {
    let mut rng = stream_rng(config.seed, DOMAIN_CHAINS, chain as u64);
    let state = initial_state(data, spec, config.init, &mut rng)?;
    let mut sampler = ChainSampler::new(data, spec, state, config.afss());
    let mut out = Vec::with_capacity(config.retained_per_chain() * layout.len());
    let mut frozen = None;
    let mut changes = 0;
    for it in 0..config.n_iterations {
        if it == config.n_burnin {
            sampler.freeze();
            frozen = Some(sampler.kernel());
        }
        sampler.sweep(&mut rng);
        if it >= config.n_burnin {
            if frozen.as_ref() != Some(&sampler.kernel()) {
                changes += 1;
            }
            if (it - config.n_burnin) % config.thin == 0 {
                out.extend(layout.pack(&sampler.state));
            }
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!("chain {chain} produced non-finite draws")));
    }
    let stats = ChainStats {
        step_limit_hits: sampler.step_limit_hits(),
        afss_refreshes: sampler.afss_refreshes(),
        kernel_at_freeze: frozen,
        kernel_changes_after_freeze: changes,
    };
    if stats.step_limit_hits > 0 {
        log::warn!("chain {chain}: {} slice updates hit the stepping-out limit", stats.step_limit_hits);
    }
    Ok((out, stats))
}

/// Runs `config.n_chains` independent chains of the marginalised sampler.
///
/// Chains run in parallel on the current rayon pool; chain `k` uses the
/// random stream `(seed, k)` so results do not depend on scheduling.
pub fn run_chains(data: &CountDataset, spec: &ModelSpec, config: &ChainConfig) -> Result<PosteriorSamples> {
    spec.validate()?;
    config.validate()?;
    if spec.n_alpha() != data.x.ncols() + 1 || spec.n_beta() != data.w.ncols() + 1 {
        return Err(Error::Config("model terms do not match the dataset's design matrices".into()));
    }
    let layout = ParameterLayout::new(spec, data);
    let results: Vec<(Vec<f64>, ChainStats)> = (0..config.n_chains)
        .into_par_iter()
        .map(|k| run_one(data, spec, config, &layout, k))
        .collect::<Result<_>>()?;
    let (chains, chain_stats): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let meta = SamplesMeta {
        seed: config.seed,
        config: config.clone(),
        spec: spec.clone(),
        spec_hash: json_digest(spec),
        data_hash: dataset_digest(data),
        sampler: "marginal".into(),
        chain_stats,
    };
    PosteriorSamples::new(layout.names().to_vec(), chains, meta)
}
