//! Log-densities and samplers shared by the model, the simulators and the
//! predictive machinery. All mass functions are evaluated on the log scale
//! through log-gamma so that counts in the millions do not overflow.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const LN_2: f64 = std::f64::consts::LN_2;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// `ln Γ(a + k) − ln Γ(a)`, summed directly for small `k` so that huge `a`
/// does not lose precision to cancellation.
pub fn ln_rising(a: f64, k: u64) -> f64 {
    if k <= 64 {
        (0..k).map(|j| (a + j as f64).ln()).sum()
    } else {
        ln_gamma(a + k as f64) - ln_gamma(a)
    }
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln logistic(eta)` without overflow in either tail.
pub fn ln_logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        -(-eta).exp().ln_1p()
    } else {
        eta - eta.exp().ln_1p()
    }
}

/// `ln (1 − logistic(eta))`.
pub fn ln_one_minus_logistic(eta: f64) -> f64 {
    ln_logistic(-eta)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Poisson log-pmf parameterised by the log of the mean.
pub fn poisson_ln_pmf_log_mean(k: u64, ln_mean: f64) -> f64 {
    if ln_mean == f64::NEG_INFINITY {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * ln_mean - ln_mean.exp() - ln_factorial(k)
}

pub fn poisson_ln_pmf(k: u64, mean: f64) -> f64 {
    poisson_ln_pmf_log_mean(k, mean.ln())
}

/// Negative Binomial log-pmf with the given mean and dispersion (size)
/// `theta`; variance is `mean + mean² / theta`.
pub fn negbin_ln_pmf(k: u64, mean: f64, theta: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let kf = k as f64;
    // theta * ln(theta / (theta + mean)) = -theta * ln(1 + mean/theta)
    let ln_p0 = -theta * (mean / theta).ln_1p();
    let ln_ratio = if k == 0 {
        0.0
    } else {
        kf * (mean.ln() - (theta + mean).ln())
    };
    ln_rising(theta, k) - ln_factorial(k) + ln_p0 + ln_ratio
}

pub fn binomial_ln_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let ln_choose = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    let a = if k == 0 { 0.0 } else { k as f64 * p.ln() };
    let b = if n == k {
        0.0
    } else {
        (n - k) as f64 * (-p).ln_1p()
    };
    ln_choose + a + b
}

pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    if !(sd > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// Zero-truncated Normal(0, scale²) on `(0, ∞)`.
pub fn half_normal_ln_pdf(x: f64, scale: f64) -> f64 {
    if !(x > 0.0) || !(scale > 0.0) {
        return f64::NEG_INFINITY;
    }
    LN_2 + normal_ln_pdf(x, 0.0, scale)
}

/// Gamma(shape, rate) log-density on `(0, ∞)`.
pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive Poisson mean");
    d.sample(rng) as u64
}

pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("positive gamma parameters")
        .sample(rng)
}

/// Negative Binomial draw through its Poisson–Gamma mixture.
pub fn sample_negbin<R: Rng + ?Sized>(rng: &mut R, mean: f64, theta: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    let u = sample_gamma(rng, theta, theta);
    sample_poisson(rng, mean * u)
}

pub fn sample_binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

pub fn sample_half_normal<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    (standard_normal(rng) * scale).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_tails_are_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((ln_logistic(-800.0) + 800.0).abs() < 1e-9);
        assert!(ln_logistic(800.0).abs() < 1e-300);
        assert!((logistic(1.5) - 0.817_574_476_193_643_6).abs() < 1e-12);
        assert!((logit(logistic(0.3)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn poisson_pmf_sums_to_one() {
        let total: f64 = (0..200).map(|k| poisson_ln_pmf(k, 10.0).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(poisson_ln_pmf_log_mean(0, f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn negbin_pmf_sums_to_one_and_has_right_mean() {
        let (mean, theta) = (7.0, 2.5);
        let (mut total, mut first) = (0.0, 0.0);
        for k in 0..2000u64 {
            let p = negbin_ln_pmf(k, mean, theta).exp();
            total += p;
            first += k as f64 * p;
        }
        assert!((total - 1.0).abs() < 1e-10);
        assert!((first - mean).abs() < 1e-8);
    }

    #[test]
    fn ln_rising_matches_gamma_difference() {
        for &(a, k) in &[(0.5, 3u64), (12.0, 40), (3.0, 500)] {
            let direct = ln_gamma(a + k as f64) - ln_gamma(a);
            assert!((ln_rising(a, k) - direct).abs() < 1e-9 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn half_normal_excludes_boundary() {
        assert_eq!(half_normal_ln_pdf(0.0, 1.0), f64::NEG_INFINITY);
        assert!(half_normal_ln_pdf(0.5, 1.0).is_finite());
    }

    #[test]
    fn binomial_pmf_edges() {
        assert_eq!(binomial_ln_pmf(5, 4, 0.5), f64::NEG_INFINITY);
        assert!((binomial_ln_pmf(2, 4, 0.5).exp() - 0.375).abs() < 1e-12);
        assert_eq!(binomial_ln_pmf(3, 3, 1.0), 0.0);
    }
}
