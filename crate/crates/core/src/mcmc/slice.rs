//! Univariate slice sampling with stepping-out and shrinkage.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Support of a scalar parameter. Bounds are exclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const UNBOUNDED: Bounds = Bounds {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
    pub const POSITIVE: Bounds = Bounds {
        lower: 0.0,
        upper: f64::INFINITY,
    };

    fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

/// Outcome of one slice update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceStep {
    pub value: f64,
    /// Stepping-out moves that landed inside the slice.
    pub expansions: u32,
    /// Shrinkage moves (rejected proposals).
    pub contractions: u32,
    /// Stepping out used the whole step budget and was cut short.
    pub hit_step_limit: bool,
}

const MAX_SHRINKS: u32 = 500;

/// One stepping-out + shrinkage update of `x` targeting `exp(log_f)`.
///
/// `max_steps` bounds the number of width-`w` extensions (split randomly
/// between the two ends); running out is reported, not treated as failure.
/// `log_f` is never evaluated outside `bounds`.
pub fn slice_update_scalar<R, F>(
    x: f64,
    mut log_f: F,
    width: f64,
    bounds: Bounds,
    max_steps: u32,
    rng: &mut R,
) -> SliceStep
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let w = if width > 0.0 && width.is_finite() { width } else { 1.0 };
    let mut eval = |v: f64| if bounds.contains(v) { log_f(v) } else { f64::NEG_INFINITY };
    let fx = eval(x);
    let level = fx + (1.0 - rng.random::<f64>()).ln();

    let mut left = x - w * rng.random::<f64>();
    let mut right = left + w;
    let steps_left = (max_steps as f64 * rng.random::<f64>()).floor() as u32;
    let mut j = steps_left;
    let mut k = max_steps.saturating_sub(1).saturating_sub(steps_left);
    let mut expansions = 0;
    let mut hit = false;
    while left > bounds.lower && eval(left) > level {
        if j == 0 {
            hit = true;
            break;
        }
        left -= w;
        j -= 1;
        expansions += 1;
    }
    while right < bounds.upper && eval(right) > level {
        if k == 0 {
            hit = true;
            break;
        }
        right += w;
        k -= 1;
        expansions += 1;
    }
    // One side running out of its random share is routine; only report
    // when the whole budget went into stepping out.
    hit &= expansions + 1 >= max_steps;
    left = left.max(bounds.lower);
    right = right.min(bounds.upper);

    let mut contractions = 0;
    loop {
        let proposal = left + rng.random::<f64>() * (right - left);
        if eval(proposal) > level {
            return SliceStep {
                value: proposal,
                expansions,
                contractions,
                hit_step_limit: hit,
            };
        }
        contractions += 1;
        if proposal < x {
            left = proposal;
        } else {
            right = proposal;
        }
        if contractions >= MAX_SHRINKS || right - left <= f64::EPSILON * x.abs().max(1e-300) {
            return SliceStep {
                value: x,
                expansions,
                contractions,
                hit_step_limit: hit,
            };
        }
    }
}

/// Slice width tuned during burn-in from the balance of expansions and
/// contractions (equal counts are the target), then frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveWidth {
    pub width: f64,
    expansions: u64,
    contractions: u64,
    frozen: bool,
}

impl AdaptiveWidth {
    pub fn new(width: f64) -> Self {
        Self {
            width,
            expansions: 0,
            contractions: 0,
            frozen: false,
        }
    }

    pub fn record(&mut self, step: &SliceStep) {
        if !self.frozen {
            self.expansions += step.expansions as u64;
            self.contractions += step.contractions as u64;
        }
    }

    /// Rescales the width by `2E / (E + C)`, clamped to `[0.5, 2]`.
    pub fn adapt(&mut self) {
        if self.frozen {
            return;
        }
        let (e, c) = (self.expansions as f64, self.contractions as f64);
        let factor = if e + c == 0.0 { 2.0 } else { (2.0 * e / (e + c)).clamp(0.5, 2.0) };
        self.width = (self.width * factor).clamp(1e-8, 1e8);
        self.expansions = 0;
        self.contractions = 0;
    }

    pub fn set(&mut self, width: f64) {
        if !self.frozen {
            self.width = width.clamp(1e-8, 1e8);
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run<F: FnMut(f64) -> f64 + Copy>(f: F, bounds: Bounds, x0: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = x0;
        (0..n)
            .map(|_| {
                x = slice_update_scalar(x, f, 1.0, bounds, 50, &mut rng).value;
                x
            })
            .collect()
    }

    #[test]
    fn exponential_target_mean() {
        let draws = run(|x| -x, Bounds::POSITIVE, 1.0, 20_000, 1);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean {mean}");
        assert!(draws.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn symmetric_target_has_no_skew() {
        let draws = run(|x| -0.5 * x * x, Bounds::UNBOUNDED, 0.0, 50_000, 2);
        let n = draws.len() as f64;
        let m = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let skew = draws.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n / var.powf(1.5);
        assert!(skew.abs() < 0.1, "skew {skew}");
    }

    #[test]
    fn half_normal_draws_stay_positive() {
        let draws = run(|x| -0.5 * x * x, Bounds::POSITIVE, 0.3, 20_000, 3);
        assert!(draws.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn step_limit_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Very wide target, tiny width, one step: stepping out must stop early.
        let step = slice_update_scalar(0.0, |x| -x * x / 2e6, 1e-3, Bounds::UNBOUNDED, 1, &mut rng);
        assert!(step.hit_step_limit);
        assert!(step.value.is_finite());
    }

    #[test]
    fn width_adaptation_moves_toward_balance() {
        let mut w = AdaptiveWidth::new(1.0);
        w.record(&SliceStep { value: 0.0, expansions: 10, contractions: 0, hit_step_limit: false });
        w.adapt();
        assert_eq!(w.width, 2.0);
        w.record(&SliceStep { value: 0.0, expansions: 1, contractions: 9, hit_step_limit: false });
        w.adapt();
        assert_eq!(w.width, 1.0);
        w.freeze();
        w.record(&SliceStep { value: 0.0, expansions: 10, contractions: 0, hit_step_limit: false });
        w.adapt();
        assert_eq!(w.width, 1.0);
    }
}
