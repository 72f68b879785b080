//! One chain of the marginalised sampler.
//!
//! Sweep order: the `(α, β)` block by AFSS, then `φ`, `θ`, `γ`, and the
//! scale parameters by univariate slice steps. Each scale gets a second,
//! non-centred step that rescales its effects along with it. Per-observation `ln λ` and
//! `ln π` are cached and patched locally after every accepted move, so a
//! random-effect update only touches the observations it affects.
//!
//! `φ` is kept on the sum-to-zero subspace exactly: a move of `φ_s` by `Δ` is
//! paired with `−Δ/n` on every member of its component. On a connected graph
//! the shift is absorbed into `α₀` as well, which leaves every other
//! observation's `ln λ` unchanged and keeps the update local.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::afss::{AfssConfig, AfssKernel, AfssSampler, BlockTarget};
use super::slice::{slice_update_scalar, AdaptiveWidth, Bounds, SliceStep};
use crate::dist;
use crate::model::{
    coefficient_log_prior, fixed_eta, fixed_log_lambda, icar_quadratic_form, ln_pi, CountDataset,
    Family, ModelSpec, ParameterState,
};

#[inline]
fn kernel(z: f64, ln_mean: f64, family: Family, dispersion: f64) -> f64 {
    match family {
        Family::Poisson => {
            if z == 0.0 {
                -ln_mean.exp()
            } else {
                z * ln_mean - ln_mean.exp()
            }
        }
        Family::NegativeBinomial => {
            let mu = ln_mean.exp();
            let zl = if z == 0.0 { 0.0 } else { z * ln_mean };
            zl - (z + dispersion) * (dispersion + mu).ln()
        }
    }
}

/// Scalar widths of the non-block updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarWidths {
    pub phi: AdaptiveWidth,
    pub theta: AdaptiveWidth,
    pub gamma: AdaptiveWidth,
    pub sigma: AdaptiveWidth,
    pub nu: AdaptiveWidth,
    pub epsilon: AdaptiveWidth,
    pub dispersion: AdaptiveWidth,
    /// Widths of the non-centred scale moves for `σ`, `ν`, `ε`.
    pub sigma_nc: AdaptiveWidth,
    pub nu_nc: AdaptiveWidth,
    pub epsilon_nc: AdaptiveWidth,
}

impl ScalarWidths {
    fn all_mut(&mut self) -> [&mut AdaptiveWidth; 10] {
        [
            &mut self.phi,
            &mut self.theta,
            &mut self.gamma,
            &mut self.sigma,
            &mut self.nu,
            &mut self.epsilon,
            &mut self.dispersion,
            &mut self.sigma_nc,
            &mut self.nu_nc,
            &mut self.epsilon_nc,
        ]
    }
}

/// Snapshot of every tunable kernel parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSnapshot {
    pub afss: AfssKernel,
    pub scalar_widths: Vec<f64>,
}

pub(crate) struct ChainSampler<'a> {
    data: &'a CountDataset,
    spec: &'a ModelSpec,
    pub state: ParameterState,
    zf: Vec<f64>,
    lam_fixed: Vec<f64>,
    eta_fixed: Vec<f64>,
    /// `φ_region + θ_region` per observation.
    re_lambda: Vec<f64>,
    ln_lambda: Vec<f64>,
    ln_pi: Vec<f64>,
    region_obs: Vec<Vec<usize>>,
    gamma_obs: Vec<Vec<usize>>,
    component_members: Vec<Vec<usize>>,
    component_obs: Vec<Vec<usize>>,
    absorb_into_intercept: bool,
    afss: AfssSampler,
    widths: ScalarWidths,
    width_interval: usize,
    max_steps: u32,
    iterations: usize,
    adapting: bool,
    step_limit_hits: u64,
}

impl<'a> ChainSampler<'a> {
    pub fn new(
        data: &'a CountDataset,
        spec: &'a ModelSpec,
        state: ParameterState,
        afss_config: AfssConfig,
    ) -> Self {
        let n = data.n_obs();
        let r = data.graph.n_regions();
        let mut region_obs = vec![Vec::new(); r];
        for i in 0..n {
            region_obs[data.region(i)].push(i);
        }
        let mut gamma_obs = vec![Vec::new(); spec.n_gamma(data)];
        for i in 0..n {
            gamma_obs[spec.gamma_slot(data, i)].push(i);
        }
        let g = &data.graph;
        let mut component_members = vec![Vec::new(); g.n_components()];
        let mut component_obs = vec![Vec::new(); g.n_components()];
        for s in 0..r {
            component_members[g.component_of(s)].push(s);
        }
        for i in 0..n {
            component_obs[g.component_of(data.region(i))].push(i);
        }
        let dim = state.alpha.len() + state.beta.len();
        let width_interval = afss_config.width_interval;
        let max_steps = afss_config.max_steps;
        let mut sampler = Self {
            data,
            spec,
            zf: data.z.iter().map(|&z| z as f64).collect(),
            lam_fixed: Vec::new(),
            eta_fixed: Vec::new(),
            re_lambda: vec![0.0; n],
            ln_lambda: vec![0.0; n],
            ln_pi: vec![0.0; n],
            region_obs,
            gamma_obs,
            component_members,
            component_obs,
            absorb_into_intercept: g.n_components() == 1,
            afss: AfssSampler::new(dim, afss_config),
            widths: ScalarWidths {
                phi: AdaptiveWidth::new(0.5),
                theta: AdaptiveWidth::new(0.5),
                gamma: AdaptiveWidth::new(0.5),
                sigma: AdaptiveWidth::new(0.5),
                nu: AdaptiveWidth::new(0.5),
                epsilon: AdaptiveWidth::new(0.5),
                dispersion: AdaptiveWidth::new((state.dispersion * 0.5).max(1.0)),
                sigma_nc: AdaptiveWidth::new(0.1),
                nu_nc: AdaptiveWidth::new(0.1),
                epsilon_nc: AdaptiveWidth::new(0.1),
            },
            width_interval,
            max_steps,
            iterations: 0,
            adapting: true,
            step_limit_hits: 0,
            state,
        };
        if spec.include_icar {
            // Start on the constrained subspace.
            let mut phi = std::mem::take(&mut sampler.state.phi);
            let means = data.graph.component_means(&phi);
            for (s, v) in phi.iter_mut().enumerate() {
                *v -= means[data.graph.component_of(s)];
            }
            if sampler.absorb_into_intercept {
                sampler.state.alpha[0] += means[0];
            }
            sampler.state.phi = phi;
        }
        sampler.refresh_caches();
        sampler
    }

    fn refresh_caches(&mut self) {
        let (data, spec) = (self.data, self.spec);
        self.lam_fixed = fixed_log_lambda(&self.state.alpha, data);
        self.eta_fixed = fixed_eta(&self.state.beta, data);
        for i in 0..data.n_obs() {
            let s = data.region(i);
            let mut re = 0.0;
            if spec.include_icar {
                re += self.state.phi[s];
            }
            if spec.include_iid_process {
                re += self.state.theta_re[s];
            }
            self.re_lambda[i] = re;
            self.ln_lambda[i] = self.lam_fixed[i] + re;
            self.ln_pi[i] = ln_pi(self.eta_at(i), data.complete[i]);
        }
    }

    #[inline]
    fn eta_at(&self, i: usize) -> f64 {
        let mut e = self.eta_fixed[i];
        if self.spec.include_iid_reporting {
            e += self.state.gamma_re[self.spec.gamma_slot(self.data, i)];
        }
        e
    }

    pub fn freeze(&mut self) {
        self.adapting = false;
        self.afss.freeze();
        self.widths.all_mut().into_iter().for_each(AdaptiveWidth::freeze);
    }

    pub fn kernel(&self) -> KernelSnapshot {
        let w = &self.widths;
        KernelSnapshot {
            afss: self.afss.kernel(),
            scalar_widths: [
                &w.phi,
                &w.theta,
                &w.gamma,
                &w.sigma,
                &w.nu,
                &w.epsilon,
                &w.dispersion,
                &w.sigma_nc,
                &w.nu_nc,
                &w.epsilon_nc,
            ]
                .iter()
                .map(|a| a.width)
                .collect(),
        }
    }

    pub fn step_limit_hits(&self) -> u64 {
        self.step_limit_hits + self.afss.step_limit_hits()
    }

    pub fn afss_refreshes(&self) -> usize {
        self.afss.refreshes()
    }

    fn slice<R: Rng + ?Sized, F: FnMut(f64) -> f64>(
        &mut self,
        x: f64,
        f: F,
        width: f64,
        bounds: Bounds,
        rng: &mut R,
    ) -> SliceStep {
        let step = slice_update_scalar(x, f, width, bounds, self.max_steps, rng);
        self.step_limit_hits += step.hit_step_limit as u64;
        step
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.update_coefficients(rng);
        if self.spec.include_icar {
            self.update_phi(rng);
        }
        if self.spec.include_iid_process {
            self.update_theta(rng);
        }
        if self.spec.include_iid_reporting {
            self.update_gamma(rng);
        }
        if self.spec.include_iid_process {
            self.update_sigma(rng);
            self.update_sigma_noncentred(rng);
        }
        if self.spec.include_icar {
            self.update_nu(rng);
            self.update_nu_noncentred(rng);
        }
        if self.spec.include_iid_reporting {
            self.update_epsilon(rng);
            self.update_epsilon_noncentred(rng);
        }
        if self.spec.family == Family::NegativeBinomial {
            self.update_dispersion(rng);
        }
        if self.adapting {
            self.iterations += 1;
            if self.iterations % self.width_interval.max(1) == 0 {
                self.widths.all_mut().into_iter().for_each(AdaptiveWidth::adapt);
            }
        }
    }

    fn update_coefficients<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n_alpha = self.state.alpha.len();
        let mut x: Vec<f64> = self.state.alpha.iter().chain(&self.state.beta).copied().collect();
        let re_eta: Vec<f64> = (0..self.data.n_obs())
            .map(|i| self.eta_at(i) - self.eta_fixed[i])
            .collect();
        let mut target = CoefficientTarget {
            data: self.data,
            spec: self.spec,
            zf: &self.zf,
            re_lambda: &self.re_lambda,
            re_eta: &re_eta,
            ln_pi: std::mem::take(&mut self.ln_pi),
            dispersion: self.state.dispersion,
            n_alpha,
            lam_fixed: std::mem::take(&mut self.lam_fixed),
            eta_fixed: std::mem::take(&mut self.eta_fixed),
            origin: Vec::new(),
            direction: Vec::new(),
            dir_lam: vec![0.0; self.data.n_obs()],
            dir_eta: vec![0.0; self.data.n_obs()],
            eta_moves: false,
        };
        self.afss.update(&mut x, &mut target, rng);
        self.lam_fixed = target.lam_fixed;
        self.eta_fixed = target.eta_fixed;
        self.ln_pi = target.ln_pi;
        self.state.alpha.copy_from_slice(&x[..n_alpha]);
        self.state.beta.copy_from_slice(&x[n_alpha..]);
        for i in 0..self.data.n_obs() {
            self.ln_lambda[i] = self.lam_fixed[i] + self.re_lambda[i];
        }
    }

    fn update_phi<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let graph = &self.data.graph;
        let family = self.spec.family;
        let disp = self.state.dispersion;
        let inv2nu2 = 1.0 / (2.0 * self.state.nu * self.state.nu);
        let priors = &self.spec.priors;
        let width = self.widths.phi.width;
        let mut steps = Vec::new();
        if self.absorb_into_intercept {
            let n = graph.n_regions();
            if n < 2 {
                return;
            }
            let nf = n as f64;
            // Raw coordinates: the actual φ is raw − shift and α₀ is α₀ + shift,
            // so ln λ depends only on raw values during the pass.
            let mut shift = 0.0;
            let a0 = self.state.alpha[0];
            for s in 0..n {
                let cur = self.state.phi[s];
                let nb_sum: f64 = graph.neighbors(s).iter().map(|&t| self.state.phi[t]).sum();
                let deg = graph.degree(s) as f64;
                let obs = &self.region_obs[s];
                let base: Vec<(f64, f64)> = obs
                    .iter()
                    .map(|&i| (self.zf[i], self.ln_pi[i] + self.ln_lambda[i] - cur))
                    .collect();
                let shift_now = shift;
                let f = |v: f64| {
                    let mut lp = -(deg * v * v - 2.0 * v * nb_sum) * inv2nu2;
                    lp += dist::normal_ln_pdf(
                        a0 + shift_now + (v - cur) / nf,
                        priors.alpha0_mean,
                        priors.alpha0_sd,
                    );
                    for &(z, b) in &base {
                        lp += kernel(z, b + v, family, disp);
                    }
                    lp
                };
                let step = slice_update_scalar(cur, f, width, Bounds::UNBOUNDED, self.max_steps, rng);
                self.step_limit_hits += step.hit_step_limit as u64;
                steps.push(step);
                let delta = step.value - cur;
                if delta != 0.0 {
                    self.state.phi[s] = step.value;
                    shift += delta / nf;
                    for &i in obs {
                        self.ln_lambda[i] += delta;
                        self.re_lambda[i] += delta;
                    }
                }
            }
            let mean = self.state.phi.iter().sum::<f64>() / nf;
            let total = shift + (mean - shift);
            self.state.alpha[0] += total;
            for v in self.state.phi.iter_mut() {
                *v -= total;
            }
            for i in 0..self.data.n_obs() {
                self.lam_fixed[i] += total;
                self.re_lambda[i] -= total;
                self.ln_lambda[i] = self.lam_fixed[i] + self.re_lambda[i];
            }
        } else {
            for c in 0..graph.n_components() {
                let members = self.component_members[c].clone();
                let nc = members.len();
                if nc < 2 {
                    continue;
                }
                let ncf = nc as f64;
                for &s in &members {
                    let cur = self.state.phi[s];
                    let nb_sum: f64 = graph.neighbors(s).iter().map(|&t| self.state.phi[t]).sum();
                    let deg = graph.degree(s) as f64;
                    let comp_obs = &self.component_obs[c];
                    let base: Vec<(f64, f64, bool)> = comp_obs
                        .iter()
                        .map(|&i| {
                            (
                                self.zf[i],
                                self.ln_pi[i] + self.ln_lambda[i],
                                self.data.region(i) == s,
                            )
                        })
                        .collect();
                    let f = |d: f64| {
                        let v = cur + d;
                        let mut lp = -(deg * v * v - 2.0 * v * nb_sum) * inv2nu2;
                        for &(z, b, own) in &base {
                            let shift = if own { d - d / ncf } else { -d / ncf };
                            lp += kernel(z, b + shift, family, disp);
                        }
                        lp
                    };
                    let step = slice_update_scalar(0.0, f, width, Bounds::UNBOUNDED, self.max_steps, rng);
                    self.step_limit_hits += step.hit_step_limit as u64;
                    steps.push(step);
                    let d = step.value;
                    if d != 0.0 {
                        for &t in &members {
                            self.state.phi[t] -= d / ncf;
                        }
                        self.state.phi[s] += d;
                        for &i in comp_obs {
                            let shift = if self.data.region(i) == s { d - d / ncf } else { -d / ncf };
                            self.ln_lambda[i] += shift;
                            self.re_lambda[i] += shift;
                        }
                    }
                }
                let mean = members.iter().map(|&s| self.state.phi[s]).sum::<f64>() / ncf;
                for &s in &members {
                    self.state.phi[s] -= mean;
                }
                for &i in &self.component_obs[c] {
                    self.re_lambda[i] -= mean;
                    self.ln_lambda[i] -= mean;
                }
            }
        }
        for step in &steps {
            self.widths.phi.record(step);
        }
    }

    fn update_theta<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let family = self.spec.family;
        let disp = self.state.dispersion;
        let inv2s2 = 1.0 / (2.0 * self.state.sigma * self.state.sigma);
        let width = self.widths.theta.width;
        for s in 0..self.data.graph.n_regions() {
            let cur = self.state.theta_re[s];
            let base: Vec<(f64, f64)> = self.region_obs[s]
                .iter()
                .map(|&i| (self.zf[i], self.ln_pi[i] + self.ln_lambda[i] - cur))
                .collect();
            let f = |v: f64| {
                let mut lp = -v * v * inv2s2;
                for &(z, b) in &base {
                    lp += kernel(z, b + v, family, disp);
                }
                lp
            };
            let step = self.slice(cur, f, width, Bounds::UNBOUNDED, rng);
            self.widths.theta.record(&step);
            let delta = step.value - cur;
            if delta != 0.0 {
                self.state.theta_re[s] = step.value;
                for &i in &self.region_obs[s] {
                    self.ln_lambda[i] += delta;
                    self.re_lambda[i] += delta;
                }
            }
        }
    }

    fn update_gamma<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let family = self.spec.family;
        let disp = self.state.dispersion;
        let inv2e2 = 1.0 / (2.0 * self.state.epsilon * self.state.epsilon);
        let width = self.widths.gamma.width;
        for j in 0..self.gamma_obs.len() {
            let cur = self.state.gamma_re[j];
            // Complete observations do not depend on γ.
            let base: Vec<(f64, f64, f64)> = self.gamma_obs[j]
                .iter()
                .filter(|&&i| !self.data.complete[i])
                .map(|&i| (self.zf[i], self.ln_lambda[i], self.eta_fixed[i]))
                .collect();
            let f = |v: f64| {
                let mut lp = -v * v * inv2e2;
                for &(z, ll, ef) in &base {
                    lp += kernel(z, ll + dist::ln_logistic(ef + v), family, disp);
                }
                lp
            };
            let step = self.slice(cur, f, width, Bounds::UNBOUNDED, rng);
            self.widths.gamma.record(&step);
            if step.value != cur {
                self.state.gamma_re[j] = step.value;
                for &i in &self.gamma_obs[j] {
                    self.ln_pi[i] = ln_pi(self.eta_fixed[i] + step.value, self.data.complete[i]);
                }
            }
        }
    }

    fn update_scale<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        current: f64,
        sum_sq: f64,
        count: f64,
        prior_scale: f64,
        width: f64,
    ) -> SliceStep {
        let inv2p = 1.0 / (2.0 * prior_scale * prior_scale);
        let f = |v: f64| -sum_sq / (2.0 * v * v) - count * v.ln() - v * v * inv2p;
        self.slice(current, f, width, Bounds::POSITIVE, rng)
    }

    fn update_sigma<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let ss: f64 = self.state.theta_re.iter().map(|v| v * v).sum();
        let n = self.state.theta_re.len() as f64;
        let step = self.update_scale(
            rng,
            self.state.sigma,
            ss,
            n,
            self.spec.priors.halfnormal_scale_sigma,
            self.widths.sigma.width,
        );
        self.widths.sigma.record(&step);
        self.state.sigma = step.value;
    }

    fn update_nu<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let q = icar_quadratic_form(&self.state.phi, &self.data.graph);
        let rank = self.data.graph.icar_rank() as f64;
        let step = self.update_scale(
            rng,
            self.state.nu,
            q,
            rank,
            self.spec.priors.halfnormal_scale_nu,
            self.widths.nu.width,
        );
        self.widths.nu.record(&step);
        self.state.nu = step.value;
    }

    fn update_epsilon<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let ss: f64 = self.state.gamma_re.iter().map(|v| v * v).sum();
        let n = self.state.gamma_re.len() as f64;
        let step = self.update_scale(
            rng,
            self.state.epsilon,
            ss,
            n,
            self.spec.priors.halfnormal_scale_epsilon,
            self.widths.epsilon.width,
        );
        self.widths.epsilon.record(&step);
        self.state.epsilon = step.value;
    }

    /// Slice step on a process-effect scale `v` with the standardised
    /// effects `u = effect / v` held fixed, so the effects move with the
    /// scale. `terms[i]` is `(z, ln mean without the effect, u)`.
    fn noncentred_scale<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        current: f64,
        prior_scale: f64,
        width: f64,
        terms: &[(f64, f64, f64)],
    ) -> SliceStep {
        let family = self.spec.family;
        let disp = self.state.dispersion;
        let inv2p = 1.0 / (2.0 * prior_scale * prior_scale);
        let f = |v: f64| {
            let mut lp = -v * v * inv2p;
            for &(z, b, u) in terms {
                lp += kernel(z, b + v * u, family, disp);
            }
            lp
        };
        self.slice(current, f, width, Bounds::POSITIVE, rng)
    }

    fn update_sigma_noncentred<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let sigma = self.state.sigma;
        if !(sigma > 0.0) {
            return;
        }
        let terms: Vec<(f64, f64, f64)> = (0..self.data.n_obs())
            .map(|i| {
                let t = self.state.theta_re[self.data.region(i)];
                (self.zf[i], self.ln_pi[i] + self.ln_lambda[i] - t, t / sigma)
            })
            .collect();
        let step = self.noncentred_scale(
            rng,
            sigma,
            self.spec.priors.halfnormal_scale_sigma,
            self.widths.sigma_nc.width,
            &terms,
        );
        self.widths.sigma_nc.record(&step);
        if step.value != sigma {
            let r = step.value / sigma;
            let old = std::mem::take(&mut self.state.theta_re);
            self.state.theta_re = old.iter().map(|t| t * r).collect();
            for i in 0..self.data.n_obs() {
                let s = self.data.region(i);
                let delta = self.state.theta_re[s] - old[s];
                self.ln_lambda[i] += delta;
                self.re_lambda[i] += delta;
            }
            self.state.sigma = step.value;
        }
    }

    /// Scaling keeps `φ` on the sum-to-zero subspace, so no intercept shift.
    fn update_nu_noncentred<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let nu = self.state.nu;
        if !(nu > 0.0) {
            return;
        }
        let terms: Vec<(f64, f64, f64)> = (0..self.data.n_obs())
            .map(|i| {
                let p = self.state.phi[self.data.region(i)];
                (self.zf[i], self.ln_pi[i] + self.ln_lambda[i] - p, p / nu)
            })
            .collect();
        let step = self.noncentred_scale(
            rng,
            nu,
            self.spec.priors.halfnormal_scale_nu,
            self.widths.nu_nc.width,
            &terms,
        );
        self.widths.nu_nc.record(&step);
        if step.value != nu {
            let r = step.value / nu;
            let old = std::mem::take(&mut self.state.phi);
            self.state.phi = old.iter().map(|p| p * r).collect();
            for i in 0..self.data.n_obs() {
                let s = self.data.region(i);
                let delta = self.state.phi[s] - old[s];
                self.ln_lambda[i] += delta;
                self.re_lambda[i] += delta;
            }
            self.state.nu = step.value;
        }
    }

    fn update_epsilon_noncentred<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let eps = self.state.epsilon;
        if !(eps > 0.0) {
            return;
        }
        // Complete observations do not depend on γ.
        let terms: Vec<(f64, f64, f64, f64)> = (0..self.data.n_obs())
            .filter(|&i| !self.data.complete[i])
            .map(|i| {
                let g = self.state.gamma_re[self.spec.gamma_slot(self.data, i)];
                (self.zf[i], self.ln_lambda[i], self.eta_fixed[i], g / eps)
            })
            .collect();
        let family = self.spec.family;
        let disp = self.state.dispersion;
        let inv2p = 1.0 / (2.0 * self.spec.priors.halfnormal_scale_epsilon.powi(2));
        let f = |v: f64| {
            let mut lp = -v * v * inv2p;
            for &(z, ll, ef, u) in &terms {
                lp += kernel(z, ll + dist::ln_logistic(ef + v * u), family, disp);
            }
            lp
        };
        let step = self.slice(eps, f, self.widths.epsilon_nc.width, Bounds::POSITIVE, rng);
        self.widths.epsilon_nc.record(&step);
        if step.value != eps {
            let r = step.value / eps;
            for g in self.state.gamma_re.iter_mut() {
                *g *= r;
            }
            for i in 0..self.data.n_obs() {
                self.ln_pi[i] = ln_pi(self.eta_at(i), self.data.complete[i]);
            }
            self.state.epsilon = step.value;
        }
    }

    fn update_dispersion<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let means: Vec<(u64, f64)> = (0..self.data.n_obs())
            .map(|i| (self.data.z[i], (self.ln_pi[i] + self.ln_lambda[i]).exp()))
            .collect();
        let (shape, rate) = (self.spec.priors.dispersion_shape, self.spec.priors.dispersion_rate);
        let f = |th: f64| {
            let mut lp = dist::gamma_ln_pdf(th, shape, rate);
            let th_ln_th = th * th.ln();
            for &(z, mu) in &means {
                lp += dist::ln_rising(th, z) + th_ln_th - (z as f64 + th) * (th + mu).ln();
            }
            lp
        };
        let width = self.widths.dispersion.width;
        let step = self.slice(self.state.dispersion, f, width, Bounds::POSITIVE, rng);
        self.widths.dispersion.record(&step);
        self.state.dispersion = step.value;
    }
}

/// `(α, β)` block target with per-direction projections cached so each
/// evaluation along a line is `O(n)`.
struct CoefficientTarget<'s> {
    data: &'s CountDataset,
    spec: &'s ModelSpec,
    zf: &'s [f64],
    re_lambda: &'s [f64],
    re_eta: &'s [f64],
    ln_pi: Vec<f64>,
    dispersion: f64,
    n_alpha: usize,
    lam_fixed: Vec<f64>,
    eta_fixed: Vec<f64>,
    origin: Vec<f64>,
    direction: Vec<f64>,
    dir_lam: Vec<f64>,
    dir_eta: Vec<f64>,
    eta_moves: bool,
}

impl CoefficientTarget<'_> {
    fn prior(&self, x: &[f64]) -> f64 {
        let p = &self.spec.priors;
        coefficient_log_prior(&x[..self.n_alpha], p.alpha0_mean, p.alpha0_sd, p.coef_sd)
            + coefficient_log_prior(&x[self.n_alpha..], p.beta0_mean, p.beta0_sd, p.coef_sd)
    }
}

impl BlockTarget for CoefficientTarget<'_> {
    fn log_density(&mut self, x: &[f64]) -> f64 {
        let lam = fixed_log_lambda(&x[..self.n_alpha], self.data);
        let eta = fixed_eta(&x[self.n_alpha..], self.data);
        let mut lp = self.prior(x);
        for i in 0..self.data.n_obs() {
            let lpi = ln_pi(eta[i] + self.re_eta[i], self.data.complete[i]);
            lp += kernel(self.zf[i], lpi + lam[i] + self.re_lambda[i], self.spec.family, self.dispersion);
        }
        lp
    }

    fn set_direction(&mut self, x: &[f64], direction: &[f64]) {
        self.origin = x.to_vec();
        self.direction = direction.to_vec();
        let (da, db) = direction.split_at(self.n_alpha);
        let (xm, wm) = (&self.data.x, &self.data.w);
        for i in 0..self.data.n_obs() {
            let mut v = da[0];
            for k in 0..xm.ncols() {
                v += xm[(i, k)] * da[k + 1];
            }
            self.dir_lam[i] = v;
            let mut e = db[0];
            for j in 0..wm.ncols() {
                e += wm[(i, j)] * db[j + 1];
            }
            self.dir_eta[i] = e;
        }
        self.eta_moves = db.iter().any(|&d| d != 0.0);
    }

    fn log_density_along(&mut self, t: f64) -> f64 {
        let point: Vec<f64> = self
            .origin
            .iter()
            .zip(&self.direction)
            .map(|(x, d)| x + t * d)
            .collect();
        let mut lp = self.prior(&point);
        let (family, disp) = (self.spec.family, self.dispersion);
        let complete = &self.data.complete;
        for i in 0..self.zf.len() {
            let lpi = if !self.eta_moves || complete[i] {
                self.ln_pi[i]
            } else {
                dist::ln_logistic(self.eta_fixed[i] + self.re_eta[i] + t * self.dir_eta[i])
            };
            let ll = self.lam_fixed[i] + self.re_lambda[i] + t * self.dir_lam[i];
            lp += kernel(self.zf[i], lpi + ll, family, disp);
        }
        lp
    }

    fn moved(&mut self, x_new: &[f64]) {
        self.lam_fixed = fixed_log_lambda(&x_new[..self.n_alpha], self.data);
        let eta = fixed_eta(&x_new[self.n_alpha..], self.data);
        if eta != self.eta_fixed {
            for i in 0..eta.len() {
                self.ln_pi[i] = ln_pi(eta[i] + self.re_eta[i], self.data.complete[i]);
            }
            self.eta_fixed = eta;
        }
    }
}
