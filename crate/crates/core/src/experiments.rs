//! The simulation-study protocols: prior sensitivity, information
//! trade-off, proxy-covariate strength and covariate classification.
//!
//! Cells are independent jobs run on the current rayon pool. A cell's chain
//! seed is derived from `(seed, cell index)`, so tables do not depend on
//! scheduling. A failing cell is recorded and the remaining cells still run.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checking::LOG_MSE_SENTINEL;
use crate::data::prepare;
use crate::error::Result;
use crate::hash::{dataset_digest, json_digest};
use crate::mcmc::{run_chains, ChainConfig, PosteriorSamples};
use crate::model::{linear_predictor_lambda, CountDataset, ModelSpec, PriorSpec, Term};
use crate::prediction::{coverage, posterior_states, predictive_intervals, quantile_type1, sample_true_counts, CountDraws};
use crate::rng::{stream_rng, DOMAIN_EXPERIMENT};
use crate::simulation::{proxy_name, simulate_dataset, HiddenTruth, SimulatedData, SimulationConfig};

fn cell_seed(seed: u64, experiment: u64, cell: usize) -> u64 {
    stream_rng(seed, DOMAIN_EXPERIMENT, (experiment << 32) | cell as u64).random()
}

fn status<T>(r: &Result<T>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => format!("error: {e}"),
    }
}

/// Model fitted in the lattice studies: a degree-1 process term and a
/// degree-1 reporting term, ICAR plus reporting noise.
fn lattice_spec(process: Option<&str>, reporting: Option<&str>, priors: PriorSpec, iid_process: bool) -> ModelSpec {
    ModelSpec {
        process_terms: process.map(|c| vec![Term::new(c, 1)]).unwrap_or_default(),
        reporting_terms: reporting.map(|c| vec![Term::new(c, 1)]).unwrap_or_default(),
        include_icar: true,
        include_iid_process: iid_process,
        include_iid_reporting: true,
        priors,
        ..ModelSpec::default()
    }
}

fn beta0_priors(mean: f64, sd: f64) -> PriorSpec {
    PriorSpec {
        beta0_mean: mean,
        beta0_sd: sd,
        ..PriorSpec::default()
    }
}

struct Fit {
    samples: PosteriorSamples,
    data: CountDataset,
    spec: ModelSpec,
    y: CountDraws,
}

fn fit(sim: &SimulatedData, spec: ModelSpec, chains: &ChainConfig, seed: u64) -> Result<Fit> {
    let (data, _) = prepare(&sim.table, &sim.graph, &spec)?;
    let config = ChainConfig { seed, ..chains.clone() };
    let samples = run_chains(&data, &spec, &config)?;
    let y = sample_true_counts(&samples, &data, &spec, seed)?;
    Ok(Fit { samples, data, spec, y })
}

fn truth_f64(truth: &HiddenTruth) -> Vec<f64> {
    truth.y.iter().map(|&v| v as f64).collect()
}

fn y_coverage(fit: &Fit, truth: &HiddenTruth, level: f64) -> Result<f64> {
    coverage(&predictive_intervals(&fit.y, level)?, &truth_f64(truth))
}

/// Posterior mean of `log λ` per observation.
fn posterior_mean_log_lambda(fit: &Fit) -> Result<Vec<f64>> {
    let states = posterior_states(&fit.samples, &fit.data, &fit.spec)?;
    let mut acc = vec![0.0; fit.data.n_obs()];
    for s in &states {
        for (a, v) in acc.iter_mut().zip(linear_predictor_lambda(s, &fit.data, &fit.spec)?) {
            *a += v;
        }
    }
    let n = states.len() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSensitivityConfig {
    pub simulation: SimulationConfig,
    pub chains: ChainConfig,
    pub prior_means: Vec<f64>,
    pub prior_sds: Vec<f64>,
    pub proxy_rho: f64,
    pub level: f64,
    pub seed: u64,
}

impl Default for PriorSensitivityConfig {
    fn default() -> Self {
        Self {
            simulation: SimulationConfig::default(),
            chains: ChainConfig::experiment(),
            prior_means: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            prior_sds: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            proxy_rho: 0.6,
            level: 0.95,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub coverage: Option<f64>,
    pub beta0_mean: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSensitivityResult {
    pub config: PriorSensitivityConfig,
    pub data_hash: String,
    pub cells: Vec<CoverageCell>,
}

impl PriorSensitivityResult {
    pub fn cell(&self, mean: f64, sd: f64) -> Option<&CoverageCell> {
        self.cells.iter().find(|c| c.prior_mean == mean && c.prior_sd == sd)
    }
}

/// Coverage of the true counts by their 95% PIs over a grid of `β₀` priors,
/// all fitted to one simulated dataset with a proxy reporting covariate.
pub fn experiment_prior_sensitivity(config: &PriorSensitivityConfig) -> Result<PriorSensitivityResult> {
    let (sim, truth) = simulate_dataset(&config.simulation)?;
    let proxy = proxy_name(config.proxy_rho);
    sim.table.covariate(&proxy)?;
    let grid: Vec<(f64, f64)> = config
        .prior_sds
        .iter()
        .flat_map(|&sd| config.prior_means.iter().map(move |&m| (m, sd)))
        .collect();
    let cells = grid
        .par_iter()
        .enumerate()
        .map(|(k, &(m, sd))| {
            let spec = lattice_spec(Some("x"), Some(&proxy), beta0_priors(m, sd), false);
            let r = fit(&sim, spec, &config.chains, cell_seed(config.seed, 1, k)).and_then(|f| {
                let b0 = f.samples.pooled("beta[0]")?;
                Ok((y_coverage(&f, &truth, config.level)?, b0.iter().sum::<f64>() / b0.len() as f64))
            });
            CoverageCell {
                prior_mean: m,
                prior_sd: sd,
                status: status(&r),
                coverage: r.as_ref().ok().map(|v| v.0),
                beta0_mean: r.as_ref().ok().map(|v| v.1),
            }
        })
        .collect();
    let data_hash = prepare(&sim.table, &sim.graph, &lattice_spec(Some("x"), Some(&proxy), PriorSpec::default(), false))
        .map(|(d, _)| dataset_digest(&d))?;
    Ok(PriorSensitivityResult {
        config: config.clone(),
        data_hash,
        cells,
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InformationTradeoffConfig {
    pub simulation: SimulationConfig,
    pub chains: ChainConfig,
    /// Sd of the `β₀` prior, centred on the true value.
    pub prior_sds: Vec<f64>,
    pub complete_fractions: Vec<f64>,
    pub proxy_rho: f64,
    pub seed: u64,
}

impl Default for InformationTradeoffConfig {
    fn default() -> Self {
        Self {
            simulation: SimulationConfig::default(),
            chains: ChainConfig::experiment(),
            prior_sds: vec![1.0, 0.6, 0.2],
            complete_fractions: vec![0.0, 0.25, 0.5],
            proxy_rho: 0.6,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMseCell {
    pub prior_sd: f64,
    pub complete_fraction: f64,
    /// Mean over posterior draws of `ln mean_s (y_s − y_s^true)²`.
    pub mean_log_mse: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationTradeoffResult {
    pub config: InformationTradeoffConfig,
    pub cells: Vec<LogMseCell>,
}

impl InformationTradeoffResult {
    pub fn cell(&self, sd: f64, fraction: f64) -> Option<&LogMseCell> {
        self.cells.iter().find(|c| c.prior_sd == sd && c.complete_fraction == fraction)
    }
}

fn mean_log_mse(y: &CountDraws, truth: &[u64]) -> f64 {
    let n = y.n_draws();
    (0..n)
        .map(|d| {
            let mse = y
                .row(d)
                .iter()
                .zip(truth)
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum::<f64>()
                / truth.len() as f64;
            if mse > 0.0 {
                mse.ln()
            } else {
                LOG_MSE_SENTINEL
            }
        })
        .sum::<f64>()
        / n as f64
}

/// Predictive log-MSE of the true counts over prior sd × fraction of
/// completely reported regions. The underlying counts are the same in
/// every cell; only the completeness flags change.
pub fn experiment_information_tradeoff(config: &InformationTradeoffConfig) -> Result<InformationTradeoffResult> {
    let proxy = proxy_name(config.proxy_rho);
    let grid: Vec<(f64, f64)> = config
        .prior_sds
        .iter()
        .flat_map(|&sd| config.complete_fractions.iter().map(move |&f| (sd, f)))
        .collect();
    let cells = grid
        .par_iter()
        .enumerate()
        .map(|(k, &(sd, frac))| {
            let r = (|| {
                let sim_cfg = SimulationConfig {
                    complete_fraction: frac,
                    ..config.simulation.clone()
                };
                let (sim, truth) = simulate_dataset(&sim_cfg)?;
                let spec = lattice_spec(Some("x"), Some(&proxy), beta0_priors(sim_cfg.beta0, sd), false);
                let f = fit(&sim, spec, &config.chains, cell_seed(config.seed, 2, k))?;
                Ok(mean_log_mse(&f.y, &truth.y))
            })();
            LogMseCell {
                prior_sd: sd,
                complete_fraction: frac,
                status: status(&r),
                mean_log_mse: r.ok(),
            }
        })
        .collect();
    Ok(InformationTradeoffResult {
        config: config.clone(),
        cells,
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovariateStrengthConfig {
    pub simulation: SimulationConfig,
    pub chains: ChainConfig,
    /// Independent simulated datasets; metrics are averaged over them.
    pub n_replicates: usize,
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub level: f64,
    pub seed: u64,
}

impl Default for CovariateStrengthConfig {
    fn default() -> Self {
        Self {
            simulation: SimulationConfig::default(),
            chains: ChainConfig::experiment(),
            n_replicates: 10,
            prior_mean: 0.0,
            prior_sd: 0.6,
            level: 0.95,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthCell {
    pub rho: f64,
    pub replicate: usize,
    pub coverage: Option<f64>,
    /// Mean over regions of (posterior mean `log λ` − true `log λ`).
    pub mean_error_log_lambda: Option<f64>,
    pub rmse_log_lambda: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthSummary {
    pub rho: f64,
    pub coverage: f64,
    pub mean_error_log_lambda: f64,
    pub rmse_log_lambda: f64,
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateStrengthResult {
    pub config: CovariateStrengthConfig,
    pub cells: Vec<StrengthCell>,
    pub summary: Vec<StrengthSummary>,
    /// Spearman correlation between `ρ` and the averaged RMSE of `log λ`.
    pub spearman_rho_rmse: f64,
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut e = k;
            while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[k]] {
                e += 1;
            }
            let avg = (k + e) as f64 / 2.0 + 1.0;
            for &i in &idx[k..=e] {
                r[i] = avg;
            }
            k = e + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Fits each proxy of the ladder in turn and scores coverage of `y` and
/// the error of `log λ` against the truth.
pub fn experiment_covariate_strength(config: &CovariateStrengthConfig) -> Result<CovariateStrengthResult> {
    let rhos = config.simulation.proxy_rhos.clone();
    let datasets: Vec<(SimulatedData, HiddenTruth)> = (0..config.n_replicates.max(1))
        .map(|r| {
            simulate_dataset(&SimulationConfig {
                seed: config.simulation.seed + r as u64,
                ..config.simulation.clone()
            })
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, f64)> = (0..datasets.len())
        .flat_map(|r| rhos.iter().map(move |&rho| (r, rho)))
        .collect();
    let cells: Vec<StrengthCell> = jobs
        .par_iter()
        .enumerate()
        .map(|(k, &(r, rho))| {
            let (sim, truth) = &datasets[r];
            let res = (|| {
                let spec = lattice_spec(Some("x"), Some(&proxy_name(rho)), beta0_priors(config.prior_mean, config.prior_sd), false);
                let f = fit(sim, spec, &config.chains, cell_seed(config.seed, 3, k))?;
                let cov = y_coverage(&f, truth, config.level)?;
                let ll = posterior_mean_log_lambda(&f)?;
                let err: Vec<f64> = ll.iter().zip(&truth.log_lambda).map(|(a, b)| a - b).collect();
                let n = err.len() as f64;
                Ok((
                    cov,
                    err.iter().sum::<f64>() / n,
                    (err.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
                ))
            })();
            StrengthCell {
                rho,
                replicate: r,
                status: status(&res),
                coverage: res.as_ref().ok().map(|v| v.0),
                mean_error_log_lambda: res.as_ref().ok().map(|v| v.1),
                rmse_log_lambda: res.as_ref().ok().map(|v| v.2),
            }
        })
        .collect();
    let summary = rhos
        .iter()
        .map(|&rho| {
            let ok: Vec<&StrengthCell> = cells.iter().filter(|c| c.rho == rho && c.coverage.is_some()).collect();
            let n = ok.len().max(1) as f64;
            StrengthSummary {
                rho,
                coverage: ok.iter().filter_map(|c| c.coverage).sum::<f64>() / n,
                mean_error_log_lambda: ok.iter().filter_map(|c| c.mean_error_log_lambda).sum::<f64>() / n,
                rmse_log_lambda: ok.iter().filter_map(|c| c.rmse_log_lambda).sum::<f64>() / n,
                n_ok: ok.len(),
            }
        })
        .collect::<Vec<StrengthSummary>>();
    let spearman_rho_rmse = spearman(
        &summary.iter().map(|s| s.rho).collect::<Vec<_>>(),
        &summary.iter().map(|s| s.rmse_log_lambda).collect::<Vec<_>>(),
    );
    Ok(CovariateStrengthResult {
        config: config.clone(),
        cells,
        summary,
        spearman_rho_rmse,
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationConfig {
    pub simulation: SimulationConfig,
    pub chains: ChainConfig,
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub seed: u64,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            simulation: SimulationConfig {
                epsilon: 0.0,
                sigma: 0.3,
                proxy_rhos: Vec::new(),
                ..SimulationConfig::default()
            },
            chains: ChainConfig::experiment(),
            prior_mean: 0.0,
            prior_sd: 0.6,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Correct,
    None,
    Swapped,
}

impl Classification {
    pub const ALL: [Classification; 3] = [Self::Correct, Self::None, Self::Swapped];

    pub fn name(self) -> &'static str {
        match self {
            Self::Correct => "correct",
            Self::None => "none",
            Self::Swapped => "swapped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationFit {
    pub variant: Classification,
    /// Digest of the simulated table and graph the variant was fitted to.
    pub data_hash: String,
    /// Posterior median of `y_s` per region.
    pub median_y: Vec<f64>,
    pub rmse: Option<f64>,
    /// Pearson correlation of median predictions with the truth.
    pub correlation: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub config: ClassificationConfig,
    pub true_y: Vec<u64>,
    pub fits: Vec<ClassificationFit>,
}

impl ClassificationResult {
    pub fn rmse(&self, variant: Classification) -> Option<f64> {
        self.fits.iter().find(|f| f.variant == variant).and_then(|f| f.rmse)
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// One simulated dataset (with an unstructured process effect) fitted with
/// the covariates assigned correctly, swapped, and left out.
pub fn experiment_covariate_classification(config: &ClassificationConfig) -> Result<ClassificationResult> {
    let (sim, truth) = simulate_dataset(&config.simulation)?;
    let priors = beta0_priors(config.prior_mean, config.prior_sd);
    let truth_y = truth_f64(&truth);
    let fits = Classification::ALL
        .par_iter()
        .enumerate()
        .map(|(k, &variant)| {
            let (process, reporting) = match variant {
                Classification::Correct => (Some("x"), Some("w")),
                Classification::Swapped => (Some("w"), Some("x")),
                Classification::None => (None, None),
            };
            let spec = lattice_spec(process, reporting, priors.clone(), true);
            let res = fit(&sim, spec, &config.chains, cell_seed(config.seed, 4, k)).map(|f| {
                let median: Vec<f64> = (0..f.data.n_obs())
                    .map(|i| {
                        let mut col = f.y.column(i);
                        col.sort_unstable();
                        quantile_type1(&col, 0.5) as f64
                    })
                    .collect();
                (json_digest(&(&sim.table, &sim.graph)), median)
            });
            let st = status(&res);
            match res {
                Ok((hash, median)) => {
                    let rmse = (median.iter().zip(&truth_y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                        / median.len() as f64)
                        .sqrt();
                    ClassificationFit {
                        variant,
                        data_hash: hash,
                        correlation: Some(pearson(&median, &truth_y)),
                        rmse: Some(rmse),
                        median_y: median,
                        status: st,
                    }
                }
                Err(_) => ClassificationFit {
                    variant,
                    data_hash: String::new(),
                    median_y: Vec::new(),
                    rmse: None,
                    correlation: None,
                    status: st,
                },
            }
        })
        .collect();
    Ok(ClassificationResult {
        config: config.clone(),
        true_y: truth.y,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_of_monotone_sequences() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
    }
}
