//! Normal prior for the mean reporting rate on the logistic scale, built
//! from external point estimates with confidence intervals.

use serde::{Deserialize, Serialize};

use crate::dist::{logistic, logit, standard_normal};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, DOMAIN_ELICITATION};

/// Probabilities at 1 are moved here before taking logits.
pub const PROBABILITY_CLAMP: f64 = 1.0 - 1e-6;
const Z975: f64 = 1.959_963_984_540_054;

/// An external estimate of a reporting rate: point and 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub point: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateApproximation {
    pub mean: f64,
    pub sd: f64,
    /// Probability-scale images of the fitted 2.5% / 97.5% quantiles.
    pub fitted_low: f64,
    pub fitted_high: f64,
}

fn clamp(p: f64) -> f64 {
    p.min(PROBABILITY_CLAMP)
}

/// Logistic-scale Normal for one estimate: the mean is `logit(point)` and
/// the sd minimises the squared probability-scale distance between the
/// Normal's 2.5%/97.5% quantiles and the interval endpoints.
pub fn approximate_rate_distribution(estimate: RateEstimate) -> Result<RateApproximation> {
    let RateEstimate { point, low, high } = estimate;
    if !(0.0 < low && low <= point && point <= high && high <= 1.0) {
        return Err(Error::Elicitation(format!(
            "need 0 < low <= point <= high <= 1, got {point} ({low}, {high})"
        )));
    }
    if low == high {
        return Err(Error::Elicitation("confidence interval has zero width".into()));
    }
    let (point, low, high) = (clamp(point), clamp(low), clamp(high));
    let mean = logit(point);
    let loss = |sd: f64| {
        (logistic(mean - Z975 * sd) - low).powi(2) + (logistic(mean + Z975 * sd) - high).powi(2)
    };
    // Coarse scan, then golden-section refinement around the best cell.
    let (a, b) = (0.0, 20.0);
    let steps = 2000;
    let h = (b - a) / steps as f64;
    let best = (0..=steps)
        .map(|k| a + k as f64 * h)
        .min_by(|x, y| loss(*x).total_cmp(&loss(*y)))
        .expect("non-empty scan");
    let (mut lo, mut hi) = ((best - h).max(0.0), best + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = hi - g * (hi - lo);
        let d = lo + g * (hi - lo);
        if loss(c) < loss(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    let sd = 0.5 * (lo + hi);
    Ok(RateApproximation {
        mean,
        sd,
        fitted_low: logistic(mean - Z975 * sd),
        fitted_high: logistic(mean + Z975 * sd),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AveragingScale {
    /// Average the logits of the rates.
    #[default]
    Logit,
    /// Average the rates themselves, then take the logit.
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Samples joined by rank.
    #[default]
    Comonotone,
    /// Samples joined in draw order.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElicitedPrior {
    pub mean: f64,
    pub sd: f64,
}

/// Distribution of the average of several logistic-scale Normals under the
/// given coupling, summarised by its mean and (n−1) sd.
///
/// Components are put in a canonical order before sampling so the result
/// does not depend on the order they are supplied in.
pub fn average_of_normals(
    components: &[(f64, f64)],
    n_sims: usize,
    seed: u64,
    scale: AveragingScale,
    coupling: Coupling,
) -> Result<ElicitedPrior> {
    if components.len() < 2 {
        return Err(Error::Elicitation("need at least two yearly estimates".into()));
    }
    if n_sims < 2 {
        return Err(Error::Elicitation("need at least two simulations".into()));
    }
    if components.iter().any(|&(m, s)| !m.is_finite() || !(s >= 0.0)) {
        return Err(Error::Elicitation("component means must be finite and sds non-negative".into()));
    }
    let mut canon = components.to_vec();
    canon.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let samples: Vec<Vec<f64>> = canon
        .iter()
        .enumerate()
        .map(|(k, &(m, s))| {
            let mut rng = stream_rng(seed, DOMAIN_ELICITATION, k as u64);
            let mut v: Vec<f64> = (0..n_sims).map(|_| m + s * standard_normal(&mut rng)).collect();
            if coupling == Coupling::Comonotone {
                v.sort_by(f64::total_cmp);
            }
            v
        })
        .collect();
    let k = samples.len() as f64;
    let averaged: Vec<f64> = (0..n_sims)
        .map(|r| match scale {
            AveragingScale::Logit => samples.iter().map(|s| s[r]).sum::<f64>() / k,
            AveragingScale::Probability => {
                logit(samples.iter().map(|s| logistic(s[r])).sum::<f64>() / k)
            }
        })
        .collect();
    let n = n_sims as f64;
    let mean = averaged.iter().sum::<f64>() / n;
    let var = averaged.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ElicitedPrior {
        mean,
        sd: var.max(0.0).sqrt(),
    })
}

/// Prior for `β₀` from yearly reporting-rate estimates: approximate each
/// year, couple the years comonotonically and average on the chosen scale.
pub fn elicit_beta0_prior(
    estimates: &[RateEstimate],
    n_sims: usize,
    seed: u64,
    scale: AveragingScale,
) -> Result<ElicitedPrior> {
    let components: Vec<(f64, f64)> = estimates
        .iter()
        .map(|&e| approximate_rate_distribution(e).map(|a| (a.mean, a.sd)))
        .collect::<Result<_>>()?;
    average_of_normals(&components, n_sims, seed, scale, Coupling::Comonotone)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_interval() {
        let a = approximate_rate_distribution(RateEstimate { point: 0.5, low: 0.269, high: 0.731 }).unwrap();
        assert_eq!(a.mean, 0.0);
        // logit(0.731) / 1.96
        let expected = (0.731f64 / 0.269).ln() / Z975;
        assert!((a.sd - expected).abs() < 1e-6, "{}", a.sd);
    }

    #[test]
    fn zero_width_is_rejected() {
        let r = approximate_rate_distribution(RateEstimate { point: 0.5, low: 0.5, high: 0.5 });
        assert!(matches!(r, Err(Error::Elicitation(_))));
        let r = approximate_rate_distribution(RateEstimate { point: 0.9, low: 0.95, high: 1.0 });
        assert!(matches!(r, Err(Error::Elicitation(_))));
    }

    #[test]
    fn degenerate_components() {
        let p = average_of_normals(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], 1000, 1, AveragingScale::Logit, Coupling::Comonotone)
            .unwrap();
        assert!((p.mean - 2.0).abs() < 1e-12);
        assert!(p.sd < 1e-12);
    }
}
