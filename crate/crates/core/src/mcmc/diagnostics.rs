//! Convergence and efficiency diagnostics over completed chains.

use serde::{Deserialize, Serialize};

use super::chains::PosteriorSamples;
use crate::error::{Error, Result};

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Split-chain potential scale reduction factor.
///
/// Each chain is halved (the middle draw of an odd-length chain is dropped),
/// then `R = √(((n−1)/n·W + B/n) / W)` over the `2m` half-chains.
pub fn psrf_of_chains(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Precondition("PSRF needs at least 2 chains".into()));
    }
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    if len < 10 || chains.iter().any(|c| c.len() != len) {
        return Err(Error::Precondition(
            "PSRF needs equal-length chains of at least 10 draws".into(),
        ));
    }
    let n = len / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..n], &c[len - n..]])
        .collect();
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_var(h)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let nf = n as f64;
    let b = nf * mean_var(&means).1;
    if !(w > 0.0) {
        return Err(Error::Diagnostic("zero within-chain variance".into()));
    }
    Ok((((nf - 1.0) / nf * w + b / nf) / w).sqrt())
}

pub fn psrf(samples: &PosteriorSamples, name: &str) -> Result<f64> {
    psrf_of_chains(&samples.traces(name)?)
}

fn autocovariance(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    let s: f64 = (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum();
    s / n as f64
}

/// Multi-chain effective sample size with Geyer's initial positive monotone
/// sequence estimator; clamped to the total number of draws.
pub fn ess_of_chains(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    let n = chains.first().map_or(0, Vec::len);
    if m == 0 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Precondition("ESS needs equal-length chains".into()));
    }
    if n * m < 100 || n < 4 {
        return Err(Error::Precondition("ESS needs at least 100 draws".into()));
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(c)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let nf = n as f64;
    let b = if m > 1 {
        let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
        nf * mean_var(&means).1
    } else {
        0.0
    };
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    if !(var_plus > 0.0) || !(w > 0.0) {
        return Err(Error::Diagnostic("constant chain".into()));
    }
    let rho = |lag: usize| -> f64 {
        let acov = chains
            .iter()
            .zip(&stats)
            .map(|(c, s)| autocovariance(c, s.0, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - acov) / var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        k += 1;
    }
    let total = (n * m) as f64;
    Ok((total / tau.max(1e-12)).min(total))
}

pub fn effective_sample_size(samples: &PosteriorSamples, name: &str) -> Result<f64> {
    ess_of_chains(&samples.traces(name)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    /// `None` when undefined (one chain or zero variance).
    pub psrf: Option<f64>,
    pub ess: Option<f64>,
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(samples: &PosteriorSamples) -> Vec<ParameterSummary> {
    samples
        .names
        .iter()
        .map(|name| {
            let traces = samples.traces(name).expect("known name");
            let mut all = traces.concat();
            let (mean, var) = mean_var(&all);
            all.sort_by(f64::total_cmp);
            ParameterSummary {
                name: name.clone(),
                mean,
                sd: var.max(0.0).sqrt(),
                q025: quantile_sorted(&all, 0.025),
                q50: quantile_sorted(&all, 0.5),
                q975: quantile_sorted(&all, 0.975),
                psrf: psrf_of_chains(&traces).ok(),
                ess: ess_of_chains(&traces).ok(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::standard_normal;
    use crate::rng::stream_rng;

    fn normal_chain(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 99, 0);
        (0..n).map(|_| shift + standard_normal(&mut rng)).collect()
    }

    #[test]
    fn psrf_of_iid_chains_is_one() {
        let chains: Vec<_> = (0..4).map(|k| normal_chain(k, 10_000, 0.0)).collect();
        let r = psrf_of_chains(&chains).unwrap();
        assert!((0.999..=1.01).contains(&r), "{r}");
    }

    #[test]
    fn psrf_of_offset_chains_is_large() {
        let chains = vec![normal_chain(1, 1000, 0.0), normal_chain(2, 1000, 10.0)];
        assert!(psrf_of_chains(&chains).unwrap() > 3.0);
    }

    #[test]
    fn psrf_of_constant_chains_is_flagged() {
        let chains = vec![vec![1.0; 50], vec![1.0; 50]];
        assert!(matches!(psrf_of_chains(&chains), Err(Error::Diagnostic(_))));
    }

    #[test]
    fn ess_of_iid_draws() {
        let chain = normal_chain(3, 20_000, 0.0);
        let ess = ess_of_chains(&[chain]).unwrap();
        assert!((0.8..=1.2).contains(&(ess / 20_000.0)), "{ess}");
    }

    #[test]
    fn ess_of_ar1() {
        let n = 100_000;
        let mut rng = stream_rng(4, 99, 0);
        let mut x = 0.0;
        let chain: Vec<f64> = (0..n)
            .map(|_| {
                x = 0.9 * x + standard_normal(&mut rng);
                x
            })
            .collect();
        let ratio = ess_of_chains(&[chain]).unwrap() / n as f64;
        let theory = 0.1 / 1.9;
        assert!((ratio / theory - 1.0).abs() < 0.5, "{ratio}");
    }

    #[test]
    fn ess_of_constant_chain_is_flagged() {
        assert!(matches!(ess_of_chains(&[vec![2.0; 200]]), Err(Error::Diagnostic(_))));
    }
}
