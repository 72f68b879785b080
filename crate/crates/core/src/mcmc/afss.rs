//! Automated factor slice sampling.
//!
//! A block of correlated parameters is updated by univariate slice steps
//! along a set of orthonormal directions ("factors"). During burn-in the
//! factors are periodically replaced by the eigenvectors of the running
//! empirical covariance of the block and each direction's slice width is
//! tuned; at the end of burn-in both are frozen so retained draws come from a
//! fixed kernel.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::slice::{slice_update_scalar, AdaptiveWidth, Bounds};

/// Log-density of a parameter block, evaluable along a line.
pub trait BlockTarget {
    fn log_density(&mut self, x: &[f64]) -> f64;

    /// Called before a run of [`log_density_along`](Self::log_density_along)
    /// evaluations with the current point and a unit direction.
    fn set_direction(&mut self, x: &[f64], direction: &[f64]);

    /// Log-density at `x + t·direction` for the pair set last.
    fn log_density_along(&mut self, t: f64) -> f64;

    /// Notifies the target that the block moved to `x_new`.
    fn moved(&mut self, _x_new: &[f64]) {}
}

/// [`BlockTarget`] over a plain closure.
pub struct FnTarget<F> {
    f: F,
    origin: Vec<f64>,
    direction: Vec<f64>,
    scratch: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> FnTarget<F> {
    pub fn new(f: F) -> Self {
        Self {
            f,
            origin: Vec::new(),
            direction: Vec::new(),
            scratch: Vec::new(),
        }
    }
}

impl<F: FnMut(&[f64]) -> f64> BlockTarget for FnTarget<F> {
    fn log_density(&mut self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn set_direction(&mut self, x: &[f64], direction: &[f64]) {
        self.origin = x.to_vec();
        self.direction = direction.to_vec();
    }

    fn log_density_along(&mut self, t: f64) -> f64 {
        self.scratch.clear();
        self.scratch
            .extend(self.origin.iter().zip(&self.direction).map(|(x, d)| x + t * d));
        (self.f)(&self.scratch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfssConfig {
    pub initial_width: f64,
    /// Iterations between factor refreshes during burn-in.
    pub adaptation_interval: usize,
    /// Iterations between width adaptations during burn-in.
    pub width_interval: usize,
    pub max_steps: u32,
}

impl Default for AfssConfig {
    fn default() -> Self {
        Self {
            initial_width: 1.0,
            adaptation_interval: 200,
            width_interval: 50,
            max_steps: 100,
        }
    }
}

/// Frozen kernel parameters, compared across iterations to check freezing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfssKernel {
    pub factors: Vec<f64>,
    pub widths: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AfssSampler {
    dim: usize,
    config: AfssConfig,
    /// Columns are the current directions.
    factors: DMatrix<f64>,
    widths: Vec<AdaptiveWidth>,
    n_seen: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    iterations: usize,
    adapting: bool,
    refreshes: usize,
    step_limit_hits: u64,
}

impl AfssSampler {
    pub fn new(dim: usize, config: AfssConfig) -> Self {
        assert!(dim >= 1, "AFSS block must have at least one parameter");
        Self {
            dim,
            factors: DMatrix::identity(dim, dim),
            widths: vec![AdaptiveWidth::new(config.initial_width); dim],
            config,
            n_seen: 0,
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
            iterations: 0,
            adapting: true,
            refreshes: 0,
            step_limit_hits: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn refreshes(&self) -> usize {
        self.refreshes
    }

    pub fn step_limit_hits(&self) -> u64 {
        self.step_limit_hits
    }

    pub fn kernel(&self) -> AfssKernel {
        AfssKernel {
            factors: self.factors.as_slice().to_vec(),
            widths: self.widths.iter().map(|w| w.width).collect(),
        }
    }

    /// Stops all adaptation.
    pub fn freeze(&mut self) {
        self.adapting = false;
        self.widths.iter_mut().for_each(AdaptiveWidth::freeze);
    }

    /// One sweep over all factor directions, updating `x` in place.
    pub fn update<T: BlockTarget, R: Rng + ?Sized>(&mut self, x: &mut [f64], target: &mut T, rng: &mut R) {
        debug_assert_eq!(x.len(), self.dim);
        if self.dim == 1 {
            // A single direction is the coordinate itself: plain slice step.
            let step = slice_update_scalar(
                x[0],
                |v| target.log_density(&[v]),
                self.widths[0].width,
                Bounds::UNBOUNDED,
                self.config.max_steps,
                rng,
            );
            self.widths[0].record(&step);
            self.step_limit_hits += step.hit_step_limit as u64;
            if step.value != x[0] {
                x[0] = step.value;
                target.moved(x);
            }
        } else {
            let mut direction = vec![0.0; self.dim];
            for k in 0..self.dim {
                direction.copy_from_slice(self.factors.column(k).as_slice());
                target.set_direction(x, &direction);
                let step = slice_update_scalar(
                    0.0,
                    |t| target.log_density_along(t),
                    self.widths[k].width,
                    Bounds::UNBOUNDED,
                    self.config.max_steps,
                    rng,
                );
                self.widths[k].record(&step);
                self.step_limit_hits += step.hit_step_limit as u64;
                if step.value != 0.0 {
                    for (xi, di) in x.iter_mut().zip(&direction) {
                        *xi += step.value * di;
                    }
                    target.moved(x);
                }
            }
        }
        if self.adapting {
            self.observe(x);
            self.iterations += 1;
            if self.iterations % self.config.width_interval.max(1) == 0 {
                self.widths.iter_mut().for_each(AdaptiveWidth::adapt);
            }
            if self.dim > 1 && self.iterations % self.config.adaptation_interval.max(1) == 0 {
                self.refresh_factors();
            }
        }
    }

    fn observe(&mut self, x: &[f64]) {
        self.n_seen += 1;
        let xv = DVector::from_column_slice(x);
        let delta = &xv - &self.mean;
        self.mean += &delta / self.n_seen as f64;
        let delta2 = &xv - &self.mean;
        self.scatter += &delta * delta2.transpose();
    }

    fn refresh_factors(&mut self) {
        if self.n_seen < 2 * self.dim + 2 {
            return;
        }
        let cov = &self.scatter / (self.n_seen - 1) as f64;
        let cov = (&cov + cov.transpose()) * 0.5;
        if cov.iter().any(|v| !v.is_finite()) {
            return;
        }
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut factors = DMatrix::zeros(self.dim, self.dim);
        for (col, &k) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(k).into_owned();
            let pivot = v.iter().cloned().fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
            if pivot < 0.0 {
                v = -v;
            }
            factors.set_column(col, &v);
            let sd = eig.eigenvalues[k].max(0.0).sqrt();
            if sd > 0.0 {
                self.widths[col].set(2.0 * sd);
            }
        }
        self.factors = factors;
        self.refreshes += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::slice::slice_update_scalar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mvn_logpdf(rho: f64) -> impl FnMut(&[f64]) -> f64 + Copy {
        move |x: &[f64]| {
            let det = 1.0 - rho * rho;
            -(x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]) / (2.0 * det)
        }
    }

    #[test]
    fn standard_normal_2d_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = AfssSampler::new(2, AfssConfig::default());
        let mut target = FnTarget::new(mvn_logpdf(0.0));
        let mut x = vec![0.0, 0.0];
        for _ in 0..2000 {
            s.update(&mut x, &mut target, &mut rng);
        }
        s.freeze();
        let n = 20_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            s.update(&mut x, &mut target, &mut rng);
            draws.push(x.clone());
        }
        for d in 0..2 {
            let m = draws.iter().map(|v| v[d]).sum::<f64>() / n as f64;
            let var = draws.iter().map(|v| (v[d] - m).powi(2)).sum::<f64>() / n as f64;
            assert!(m.abs() < 0.05, "mean {m}");
            assert!((var - 1.0).abs() < 0.1, "var {var}");
        }
    }

    #[test]
    fn one_dimensional_block_is_plain_slice_sampling() {
        let f = |x: &[f64]| -0.5 * x[0] * x[0];
        let config = AfssConfig {
            initial_width: 1.3,
            ..AfssConfig::default()
        };
        let mut s = AfssSampler::new(1, config);
        s.freeze();
        let mut target = FnTarget::new(f);
        let mut rng_a = ChaCha8Rng::seed_from_u64(9);
        let mut rng_b = ChaCha8Rng::seed_from_u64(9);
        let mut x = vec![0.4];
        let mut y = 0.4;
        for _ in 0..500 {
            s.update(&mut x, &mut target, &mut rng_a);
            y = slice_update_scalar(y, |v| -0.5 * v * v, 1.3, Bounds::UNBOUNDED, 100, &mut rng_b).value;
            assert_eq!(x[0].to_bits(), y.to_bits());
        }
    }

    #[test]
    fn factors_align_with_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = AfssSampler::new(2, AfssConfig::default());
        let mut target = FnTarget::new(mvn_logpdf(0.99));
        let mut x = vec![0.0, 0.0];
        for _ in 0..3000 {
            s.update(&mut x, &mut target, &mut rng);
        }
        assert!(s.refreshes() > 0);
        let k = s.kernel();
        // Leading factor close to (1, 1)/√2.
        assert!((k.factors[0].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.05);
        assert!((k.factors[1].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.05);
        assert!(k.widths[0] > 5.0 * k.widths[1]);
    }

    #[test]
    fn frozen_kernel_does_not_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = AfssSampler::new(3, AfssConfig::default());
        let mut target = FnTarget::new(|x: &[f64]| -x.iter().map(|v| v * v).sum::<f64>());
        let mut x = vec![1.0, -1.0, 0.5];
        for _ in 0..500 {
            s.update(&mut x, &mut target, &mut rng);
        }
        s.freeze();
        let before = s.kernel();
        for _ in 0..1000 {
            s.update(&mut x, &mut target, &mut rng);
        }
        assert_eq!(before, s.kernel());
    }
}
