//! Centred orthogonal polynomial bases.
//!
//! The basis for a covariate `x` of degree `d` is obtained by Gram–Schmidt
//! orthogonalisation of `(x, x², …, x^d)` against the constant column over the
//! training points, carried out with the three-term (Stieltjes) recurrence so
//! the same constants can be replayed at new points. Each column is scaled to
//! unit sum of squares over the training points; its leading coefficient is
//! positive. Every column has zero training mean, so a degree-1 term vanishes
//! at the training mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoPolyBasis {
    degree: usize,
    /// Recurrence shifts `a_0, …, a_{d-1}`.
    shifts: Vec<f64>,
    /// Squared norms of the monic polynomials `P_0, …, P_d` on the training set.
    norms2: Vec<f64>,
    train_min: f64,
    train_max: f64,
}

impl OrthoPolyBasis {
    pub fn fit(x: &[f64], degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::BasisFit("degree must be at least 1".into()));
        }
        if x.len() <= degree {
            return Err(Error::BasisFit(format!(
                "need more than {degree} points for a degree-{degree} basis, got {}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BasisFit("covariate contains non-finite values".into()));
        }
        let n = x.len();
        let mut shifts = Vec::with_capacity(degree);
        let mut norms2 = Vec::with_capacity(degree + 1);
        let mut prev = vec![0.0; n];
        let mut cur = vec![1.0; n];
        norms2.push(n as f64);
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for k in 0..degree {
            let nk = norms2[k];
            let a = x.iter().zip(&cur).map(|(xi, p)| xi * p * p).sum::<f64>() / nk;
            shifts.push(a);
            let ratio = if k == 0 { 0.0 } else { nk / norms2[k - 1] };
            let next: Vec<f64> = (0..n)
                .map(|i| (x[i] - a) * cur[i] - ratio * prev[i])
                .collect();
            let nn = next.iter().map(|v| v * v).sum::<f64>();
            // Relative to the size a generic degree-(k+1) polynomial would have.
            if !(nn > 1e-20 * n as f64 * scale.powi(2 * (k as i32 + 1))) {
                return Err(Error::BasisFit(format!(
                    "covariate has too few distinct values for degree {}",
                    k + 1
                )));
            }
            norms2.push(nn);
            prev = cur;
            cur = next;
        }
        let (train_min, train_max) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(Self {
            degree,
            shifts,
            norms2,
            train_min,
            train_max,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn training_range(&self) -> (f64, f64) {
        (self.train_min, self.train_max)
    }

    /// Training mean, i.e. the point where the degree-1 column is zero.
    pub fn center(&self) -> f64 {
        self.shifts[0]
    }

    /// Slope in `x` of the degree-1 column, so a coefficient `c` on that
    /// column is a raw-scale slope of `c · linear_scale()`.
    pub fn linear_scale(&self) -> f64 {
        1.0 / self.norms2[1].sqrt()
    }

    /// Basis values at a single point, one per column.
    pub fn evaluate_point(&self, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.degree);
        let mut prev = 0.0;
        let mut cur = 1.0;
        for k in 0..self.degree {
            let ratio = if k == 0 { 0.0 } else { self.norms2[k] / self.norms2[k - 1] };
            let next = (x - self.shifts[k]) * cur - ratio * prev;
            out.push(next / self.norms2[k + 1].sqrt());
            prev = cur;
            cur = next;
        }
        out
    }

    /// Row-per-point matrix of basis values, stored row-major.
    pub fn evaluate(&self, x_new: &[f64]) -> Vec<Vec<f64>> {
        x_new.iter().map(|&x| self.evaluate_point(x)).collect()
    }
}
