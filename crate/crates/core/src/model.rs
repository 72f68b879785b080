//! The Binomial-thinned Poisson ("Pogit") hierarchy.
//!
//! True counts `y ~ Poisson(λ)` (or NegBin with mean `λ`) are thinned by a
//! reporting probability `π`, giving recorded counts `z | y ~ Binomial(π, y)`.
//! Integrating `y` out gives `z ~ Poisson(πλ)` (resp. `NegBin(πλ, θ)`), which
//! is the likelihood used for fitting.
//!
//! ```text
//! log λ = offset + α₀ + Σ α_k x_k + φ_region + θ_region
//! logit π = β₀ + Σ β_j w_j + γ          (π = 1 when the count is complete)
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;

/// Observation model for the true counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Poisson,
    NegativeBinomial,
}

/// One covariate expanded into an orthogonal polynomial of `degree`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub covariate: String,
    pub degree: usize,
}

impl Term {
    pub fn new(covariate: impl Into<String>, degree: usize) -> Self {
        Self {
            covariate: covariate.into(),
            degree,
        }
    }
}

/// How the reporting noise `γ` is indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaIndex {
    /// One effect per observation (region × time unit).
    #[default]
    Observation,
    /// One effect per region, shared across time.
    Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub alpha0_mean: f64,
    pub alpha0_sd: f64,
    pub beta0_mean: f64,
    pub beta0_sd: f64,
    pub coef_sd: f64,
    pub halfnormal_scale_sigma: f64,
    pub halfnormal_scale_nu: f64,
    pub halfnormal_scale_epsilon: f64,
    /// Gamma(shape, rate) prior on the Negative Binomial dispersion.
    pub dispersion_shape: f64,
    pub dispersion_rate: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            alpha0_mean: 0.0,
            alpha0_sd: 10.0,
            beta0_mean: 0.0,
            beta0_sd: 10.0,
            coef_sd: 10.0,
            halfnormal_scale_sigma: 1.0,
            halfnormal_scale_nu: 1.0,
            halfnormal_scale_epsilon: 1.0,
            dispersion_shape: 2.0,
            dispersion_rate: 0.1,
        }
    }
}

impl PriorSpec {
    /// Priors used for the tuberculosis application: `α₀ ~ N(−8, 1)` and an
    /// elicited `β₀ ~ N(2, 0.6²)`.
    pub fn tuberculosis() -> Self {
        Self {
            alpha0_mean: -8.0,
            alpha0_sd: 1.0,
            beta0_mean: 2.0,
            beta0_sd: 0.6,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("alpha0_sd", self.alpha0_sd),
            ("beta0_sd", self.beta0_sd),
            ("coef_sd", self.coef_sd),
            ("halfnormal_scale_sigma", self.halfnormal_scale_sigma),
            ("halfnormal_scale_nu", self.halfnormal_scale_nu),
            ("halfnormal_scale_epsilon", self.halfnormal_scale_epsilon),
            ("dispersion_shape", self.dispersion_shape),
            ("dispersion_rate", self.dispersion_rate),
        ];
        for (name, v) in positives {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("priors.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("alpha0_mean", self.alpha0_mean), ("beta0_mean", self.beta0_mean)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("priors.{name} must be finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    pub process_terms: Vec<Term>,
    pub reporting_terms: Vec<Term>,
    pub include_icar: bool,
    pub include_iid_process: bool,
    pub include_iid_reporting: bool,
    pub gamma_index: GammaIndex,
    pub priors: PriorSpec,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            family: Family::Poisson,
            process_terms: Vec::new(),
            reporting_terms: Vec::new(),
            include_icar: false,
            include_iid_process: false,
            include_iid_reporting: false,
            gamma_index: GammaIndex::Observation,
            priors: PriorSpec::default(),
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        for term in self.process_terms.iter().chain(&self.reporting_terms) {
            if term.degree == 0 {
                return Err(Error::Config(format!(
                    "term '{}' must have degree >= 1",
                    term.covariate
                )));
            }
        }
        for p in &self.process_terms {
            if self.reporting_terms.iter().any(|r| r.covariate == p.covariate) {
                return Err(Error::Config(format!(
                    "covariate '{}' appears in both the process and the reporting model",
                    p.covariate
                )));
            }
        }
        let mut names: Vec<&str> = self
            .process_terms
            .iter()
            .chain(&self.reporting_terms)
            .map(|t| t.covariate.as_str())
            .collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("a covariate is listed twice".into()));
        }
        self.priors.validate()
    }

    pub fn n_alpha(&self) -> usize {
        1 + self.process_terms.iter().map(|t| t.degree).sum::<usize>()
    }

    pub fn n_beta(&self) -> usize {
        1 + self.reporting_terms.iter().map(|t| t.degree).sum::<usize>()
    }

    pub fn n_gamma(&self, data: &CountDataset) -> usize {
        match self.gamma_index {
            GammaIndex::Observation => data.n_obs(),
            GammaIndex::Region => data.graph.n_regions(),
        }
    }

    pub fn gamma_slot(&self, data: &CountDataset, obs: usize) -> usize {
        match self.gamma_index {
            GammaIndex::Observation => obs,
            GammaIndex::Region => data.units[obs].region,
        }
    }
}

/// Labels locating an observation: group `i`, time `t` and region `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub group: usize,
    pub time: i64,
    pub region: usize,
}

/// Model-ready data: counts, expanded covariate matrices and the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDataset {
    pub z: Vec<u64>,
    pub units: Vec<Unit>,
    /// Process covariates, one row per observation.
    pub x: DMatrix<f64>,
    /// Reporting covariates, one row per observation.
    pub w: DMatrix<f64>,
    pub offset: Vec<f64>,
    pub complete: Vec<bool>,
    pub graph: AdjacencyGraph,
}

impl CountDataset {
    pub fn new(
        z: Vec<u64>,
        units: Vec<Unit>,
        x: DMatrix<f64>,
        w: DMatrix<f64>,
        offset: Vec<f64>,
        complete: Vec<bool>,
        graph: AdjacencyGraph,
    ) -> Result<Self> {
        let n = z.len();
        if units.len() != n || offset.len() != n || complete.len() != n {
            return Err(Error::Data(format!(
                "inconsistent lengths: z={n}, units={}, offset={}, complete={}",
                units.len(),
                offset.len(),
                complete.len()
            )));
        }
        if x.nrows() != n || w.nrows() != n {
            return Err(Error::Data(format!(
                "covariate matrices have {} and {} rows, expected {n}",
                x.nrows(),
                w.nrows()
            )));
        }
        if let Some(i) = offset.iter().position(|o| !o.is_finite()) {
            return Err(Error::Data(format!("offset of observation {i} is not finite")));
        }
        if x.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("covariate matrix contains non-finite values".into()));
        }
        if let Some((i, u)) = units
            .iter()
            .enumerate()
            .find(|(_, u)| u.region >= graph.n_regions())
        {
            return Err(Error::Data(format!(
                "observation {i} references region {} but the graph has {} regions",
                u.region,
                graph.n_regions()
            )));
        }
        Ok(Self {
            z,
            units,
            x,
            w,
            offset,
            complete,
            graph,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.z.len()
    }

    pub fn region(&self, i: usize) -> usize {
        self.units[i].region
    }
}

/// One point in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub phi: Vec<f64>,
    pub theta_re: Vec<f64>,
    pub gamma_re: Vec<f64>,
    pub sigma: f64,
    pub nu: f64,
    pub epsilon: f64,
    pub dispersion: f64,
}

impl ParameterState {
    /// Coefficients at their prior means, effects at zero, scales at 0.5 and
    /// the dispersion at its prior mean.
    pub fn initial(spec: &ModelSpec, data: &CountDataset) -> Self {
        let p = &spec.priors;
        let mut alpha = vec![0.0; spec.n_alpha()];
        alpha[0] = p.alpha0_mean;
        let mut beta = vec![0.0; spec.n_beta()];
        beta[0] = p.beta0_mean;
        let r = data.graph.n_regions();
        Self {
            alpha,
            beta,
            phi: vec![0.0; r],
            theta_re: vec![0.0; r],
            gamma_re: vec![0.0; spec.n_gamma(data)],
            sigma: 0.5,
            nu: 0.5,
            epsilon: 0.5,
            dispersion: p.dispersion_shape / p.dispersion_rate,
        }
    }
}

fn check_dims(state: &ParameterState, data: &CountDataset, spec: &ModelSpec) -> Result<()> {
    if state.alpha.len() != data.x.ncols() + 1 {
        return Err(Error::Config(format!(
            "alpha has {} entries but the process design has {} columns",
            state.alpha.len(),
            data.x.ncols()
        )));
    }
    if state.beta.len() != data.w.ncols() + 1 {
        return Err(Error::Config(format!(
            "beta has {} entries but the reporting design has {} columns",
            state.beta.len(),
            data.w.ncols()
        )));
    }
    let r = data.graph.n_regions();
    if spec.include_icar && state.phi.len() != r {
        return Err(Error::Config(format!("phi has {} entries, expected {r}", state.phi.len())));
    }
    if spec.include_iid_process && state.theta_re.len() != r {
        return Err(Error::Config(format!(
            "theta has {} entries, expected {r}",
            state.theta_re.len()
        )));
    }
    if spec.include_iid_reporting && state.gamma_re.len() != spec.n_gamma(data) {
        return Err(Error::Config(format!(
            "gamma has {} entries, expected {}",
            state.gamma_re.len(),
            spec.n_gamma(data)
        )));
    }
    Ok(())
}

/// `X·α_{1..}` plus the intercept and offset, without random effects.
pub(crate) fn fixed_log_lambda(alpha: &[f64], data: &CountDataset) -> Vec<f64> {
    let x = &data.x;
    (0..data.n_obs())
        .map(|i| {
            let mut v = data.offset[i] + alpha[0];
            for k in 0..x.ncols() {
                v += x[(i, k)] * alpha[k + 1];
            }
            v
        })
        .collect()
}

pub(crate) fn fixed_eta(beta: &[f64], data: &CountDataset) -> Vec<f64> {
    let w = &data.w;
    (0..data.n_obs())
        .map(|i| {
            let mut v = beta[0];
            for j in 0..w.ncols() {
                v += w[(i, j)] * beta[j + 1];
            }
            v
        })
        .collect()
}

/// Per-observation `log λ`.
pub fn linear_predictor_lambda(
    state: &ParameterState,
    data: &CountDataset,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    check_dims(state, data, spec)?;
    let mut out = fixed_log_lambda(&state.alpha, data);
    for (i, v) in out.iter_mut().enumerate() {
        let s = data.region(i);
        if spec.include_icar {
            *v += state.phi[s];
        }
        if spec.include_iid_process {
            *v += state.theta_re[s];
        }
    }
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!("log lambda of observation {i} is not finite")));
    }
    Ok(out)
}

/// Per-observation logit-scale reporting predictor `η` (ignoring completeness).
pub fn reporting_linear_predictor(
    state: &ParameterState,
    data: &CountDataset,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    check_dims(state, data, spec)?;
    let mut out = fixed_eta(&state.beta, data);
    if spec.include_iid_reporting {
        for (i, v) in out.iter_mut().enumerate() {
            *v += state.gamma_re[spec.gamma_slot(data, i)];
        }
    }
    Ok(out)
}

/// Per-observation reporting probability: 1 for complete counts, otherwise
/// `logistic(η)`.
pub fn reporting_probability(
    state: &ParameterState,
    data: &CountDataset,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    let eta = reporting_linear_predictor(state, data, spec)?;
    Ok(eta
        .iter()
        .zip(&data.complete)
        .map(|(&e, &c)| if c { 1.0 } else { dist::logistic(e) })
        .collect())
}

/// `ln π` for one observation.
#[inline]
pub(crate) fn ln_pi(eta: f64, complete: bool) -> f64 {
    if complete {
        0.0
    } else {
        dist::ln_logistic(eta)
    }
}

/// Full log-pmf of one recorded count under the marginal model.
pub fn observation_log_likelihood(
    z: u64,
    ln_lambda: f64,
    eta: f64,
    complete: bool,
    family: Family,
    dispersion: f64,
) -> f64 {
    let ln_mean = ln_pi(eta, complete) + ln_lambda;
    match family {
        Family::Poisson => dist::poisson_ln_pmf_log_mean(z, ln_mean),
        Family::NegativeBinomial => dist::negbin_ln_pmf(z, ln_mean.exp(), dispersion),
    }
}

/// `Σ log p(z | π λ)` with `y` integrated out.
pub fn marginal_log_likelihood(
    state: &ParameterState,
    data: &CountDataset,
    spec: &ModelSpec,
) -> Result<f64> {
    let ln_lambda = linear_predictor_lambda(state, data, spec)?;
    let eta = reporting_linear_predictor(state, data, spec)?;
    if spec.family == Family::NegativeBinomial && !(state.dispersion > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total = 0.0;
    for i in 0..data.n_obs() {
        total += observation_log_likelihood(
            data.z[i],
            ln_lambda[i],
            eta[i],
            data.complete[i],
            spec.family,
            state.dispersion,
        );
    }
    if total.is_nan() {
        return Err(Error::Evaluation("log-likelihood evaluated to NaN".into()));
    }
    Ok(total)
}

/// Tolerance on per-component sums of `φ`.
pub const ICAR_SUM_TOLERANCE: f64 = 1e-8;

/// Sum of squared differences over unique neighbouring pairs.
pub fn icar_quadratic_form(phi: &[f64], graph: &AdjacencyGraph) -> f64 {
    graph
        .edges()
        .map(|(s, t)| {
            let d = phi[s] - phi[t];
            d * d
        })
        .sum()
}

/// Improper ICAR log-density with variance parameter `ν²`:
/// `−Q(φ)/(2ν²) − (n − components)·ln ν`.
pub fn icar_log_density(phi: &[f64], nu: f64, graph: &AdjacencyGraph) -> Result<f64> {
    if phi.len() != graph.n_regions() {
        return Err(Error::Config(format!(
            "phi has {} entries but the graph has {} regions",
            phi.len(),
            graph.n_regions()
        )));
    }
    let mut sums = vec![0.0; graph.n_components()];
    for (s, v) in phi.iter().enumerate() {
        sums[graph.component_of(s)] += v;
    }
    if let Some((c, sum)) = sums.iter().enumerate().find(|(_, v)| v.abs() > ICAR_SUM_TOLERANCE) {
        return Err(Error::Precondition(format!(
            "phi must sum to zero within each component; component {c} sums to {sum:e}"
        )));
    }
    if !(nu > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let q = icar_quadratic_form(phi, graph);
    Ok(-q / (2.0 * nu * nu) - graph.icar_rank() as f64 * nu.ln())
}

pub(crate) fn coefficient_log_prior(coefs: &[f64], intercept_mean: f64, intercept_sd: f64, sd: f64) -> f64 {
    coefs
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            if k == 0 {
                dist::normal_ln_pdf(c, intercept_mean, intercept_sd)
            } else {
                dist::normal_ln_pdf(c, 0.0, sd)
            }
        })
        .sum()
}

pub(crate) fn iid_log_density(values: &[f64], scale: f64) -> f64 {
    if !(scale > 0.0) {
        return f64::NEG_INFINITY;
    }
    let ss: f64 = values.iter().map(|v| v * v).sum();
    -ss / (2.0 * scale * scale) - values.len() as f64 * (scale.ln() + 0.918_938_533_204_672_8)
}

/// Joint prior log-density with all normalising constants of proper
/// components kept (the ICAR term is improper and has none).
pub fn log_prior(state: &ParameterState, data: &CountDataset, spec: &ModelSpec) -> Result<f64> {
    check_dims(state, data, spec)?;
    let p = &spec.priors;
    let mut lp = coefficient_log_prior(&state.alpha, p.alpha0_mean, p.alpha0_sd, p.coef_sd)
        + coefficient_log_prior(&state.beta, p.beta0_mean, p.beta0_sd, p.coef_sd);
    if spec.include_icar {
        lp += dist::half_normal_ln_pdf(state.nu, p.halfnormal_scale_nu);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        lp += icar_log_density(&state.phi, state.nu, &data.graph)?;
    }
    if spec.include_iid_process {
        lp += dist::half_normal_ln_pdf(state.sigma, p.halfnormal_scale_sigma);
        lp += iid_log_density(&state.theta_re, state.sigma);
    }
    if spec.include_iid_reporting {
        lp += dist::half_normal_ln_pdf(state.epsilon, p.halfnormal_scale_epsilon);
        lp += iid_log_density(&state.gamma_re, state.epsilon);
    }
    if spec.family == Family::NegativeBinomial {
        lp += dist::gamma_ln_pdf(state.dispersion, p.dispersion_shape, p.dispersion_rate);
    }
    if lp.is_nan() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(lp)
}

pub fn log_posterior(state: &ParameterState, data: &CountDataset, spec: &ModelSpec) -> Result<f64> {
    let lp = log_prior(state, data, spec)?;
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(marginal_log_likelihood(state, data, spec)? + lp)
}

/// Maps a [`ParameterState`] onto a flat vector of named parameters, keeping
/// only the components the model uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub n_alpha: usize,
    pub n_beta: usize,
    pub n_phi: usize,
    pub n_theta: usize,
    pub n_gamma: usize,
    pub has_sigma: bool,
    pub has_nu: bool,
    pub has_epsilon: bool,
    pub has_dispersion: bool,
    names: Vec<String>,
}

impl ParameterLayout {
    pub fn new(spec: &ModelSpec, data: &CountDataset) -> Self {
        let r = data.graph.n_regions();
        let mut layout = Self {
            n_alpha: spec.n_alpha(),
            n_beta: spec.n_beta(),
            n_phi: if spec.include_icar { r } else { 0 },
            n_theta: if spec.include_iid_process { r } else { 0 },
            n_gamma: if spec.include_iid_reporting { spec.n_gamma(data) } else { 0 },
            has_sigma: spec.include_iid_process,
            has_nu: spec.include_icar,
            has_epsilon: spec.include_iid_reporting,
            has_dispersion: spec.family == Family::NegativeBinomial,
            names: Vec::new(),
        };
        let mut names = Vec::new();
        for (prefix, n) in [
            ("alpha", layout.n_alpha),
            ("beta", layout.n_beta),
            ("phi", layout.n_phi),
            ("theta", layout.n_theta),
            ("gamma", layout.n_gamma),
        ] {
            names.extend((0..n).map(|k| format!("{prefix}[{k}]")));
        }
        for (name, on) in [
            ("sigma", layout.has_sigma),
            ("nu", layout.has_nu),
            ("epsilon", layout.has_epsilon),
            ("dispersion", layout.has_dispersion),
        ] {
            if on {
                names.push(name.to_string());
            }
        }
        layout.names = names;
        layout
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Offset of the first `alpha`, `beta`, … entry.
    pub fn alpha_offset(&self) -> usize {
        0
    }
    pub fn beta_offset(&self) -> usize {
        self.n_alpha
    }
    pub fn phi_offset(&self) -> usize {
        self.n_alpha + self.n_beta
    }
    pub fn theta_offset(&self) -> usize {
        self.phi_offset() + self.n_phi
    }
    pub fn gamma_offset(&self) -> usize {
        self.theta_offset() + self.n_theta
    }

    pub fn pack(&self, state: &ParameterState) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&state.alpha);
        out.extend_from_slice(&state.beta);
        out.extend_from_slice(&state.phi[..self.n_phi]);
        out.extend_from_slice(&state.theta_re[..self.n_theta]);
        out.extend_from_slice(&state.gamma_re[..self.n_gamma]);
        for (v, on) in [
            (state.sigma, self.has_sigma),
            (state.nu, self.has_nu),
            (state.epsilon, self.has_epsilon),
            (state.dispersion, self.has_dispersion),
        ] {
            if on {
                out.push(v);
            }
        }
        out
    }

    /// Inverse of [`pack`](Self::pack); disabled components come back as
    /// zero effects of the full size and unit scales.
    pub fn unpack(&self, values: &[f64], data: &CountDataset, spec: &ModelSpec) -> ParameterState {
        let mut at = 0;
        let mut take = |n: usize| {
            let v = values[at..at + n].to_vec();
            at += n;
            v
        };
        let alpha = take(self.n_alpha);
        let beta = take(self.n_beta);
        let r = data.graph.n_regions();
        let pad = |v: Vec<f64>, n: usize| if v.is_empty() { vec![0.0; n] } else { v };
        let phi = pad(take(self.n_phi), r);
        let theta_re = pad(take(self.n_theta), r);
        let gamma_re = pad(take(self.n_gamma), spec.n_gamma(data));
        let mut scalar = |on: bool| if on { take(1)[0] } else { 1.0 };
        let sigma = scalar(self.has_sigma);
        let nu = scalar(self.has_nu);
        let epsilon = scalar(self.has_epsilon);
        let dispersion = scalar(self.has_dispersion);
        ParameterState {
            alpha,
            beta,
            phi,
            theta_re,
            gamma_re,
            sigma,
            nu,
            epsilon,
            dispersion,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{binomial_ln_pmf, poisson_ln_pmf};

    fn toy(n: usize, x: Vec<f64>, w: Vec<f64>, complete: bool) -> CountDataset {
        let graph = AdjacencyGraph::lattice(1, n);
        let kx = x.len() / n.max(1);
        let kw = w.len() / n.max(1);
        CountDataset::new(
            vec![4; n],
            (0..n).map(|s| Unit { group: 0, time: 0, region: s }).collect(),
            DMatrix::from_row_slice(n, kx, &x),
            DMatrix::from_row_slice(n, kw, &w),
            vec![0.0; n],
            vec![complete; n],
            graph,
        )
        .unwrap()
    }

    fn spec_with(nx: usize, nw: usize) -> ModelSpec {
        ModelSpec {
            process_terms: (0..nx).map(|k| Term::new(format!("x{k}"), 1)).collect(),
            reporting_terms: (0..nw).map(|k| Term::new(format!("w{k}"), 1)).collect(),
            ..ModelSpec::default()
        }
    }

    #[test]
    fn zero_state_gives_zero_log_lambda() {
        let data = toy(3, vec![0.1, 0.2, 0.3], vec![], false);
        let spec = spec_with(1, 0);
        let mut st = ParameterState::initial(&spec, &data);
        st.alpha = vec![0.0, 0.0];
        let ll = linear_predictor_lambda(&st, &data, &spec).unwrap();
        assert_eq!(ll, vec![0.0; 3]);
    }

    #[test]
    fn simulation_truth_process_half() {
        let data = toy(1, vec![0.5], vec![], false);
        let spec = spec_with(1, 0);
        let mut st = ParameterState::initial(&spec, &data);
        st.alpha = vec![4.0, 1.0];
        assert!((linear_predictor_lambda(&st, &data, &spec).unwrap()[0] - 4.5).abs() < 1e-15);
    }

    #[test]
    fn offset_and_effects_enter_log_lambda() {
        let mut data = toy(2, vec![], vec![], false);
        data.offset = vec![100f64.ln(), 0.0];
        let spec = ModelSpec {
            include_icar: true,
            include_iid_process: true,
            ..ModelSpec::default()
        };
        let mut st = ParameterState::initial(&spec, &data);
        st.alpha = vec![1.0];
        st.phi = vec![0.2, -0.2];
        st.theta_re = vec![-0.1, 0.0];
        let v = linear_predictor_lambda(&st, &data, &spec).unwrap()[0];
        // Independent re-evaluation of 1 + ln(100) + 0.2 - 0.1.
        let expected = 1.0 + 4.605_170_185_988_092 + 0.2 - 0.1;
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 5.70517).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let data = toy(2, vec![0.1, 0.2], vec![], false);
        let spec = spec_with(1, 0);
        let mut st = ParameterState::initial(&spec, &data);
        st.alpha = vec![0.0];
        assert!(matches!(
            linear_predictor_lambda(&st, &data, &spec),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            reporting_probability(&st, &data, &spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reporting_probability_cases() {
        let data = toy(1, vec![], vec![0.75], false);
        let spec = spec_with(0, 1);
        let mut st = ParameterState::initial(&spec, &data);
        st.beta = vec![0.0, 0.0];
        assert_eq!(reporting_probability(&st, &data, &spec).unwrap()[0], 0.5);
        st.beta = vec![0.0, 2.0];
        let p = reporting_probability(&st, &data, &spec).unwrap()[0];
        assert!((p - 1.0 / (1.0 + (-1.5f64).exp())).abs() < 1e-15);
        assert!((p - 0.817574).abs() < 1e-6);
        let complete = toy(1, vec![], vec![0.75], true);
        st.beta = vec![-3.0, 7.0];
        assert_eq!(reporting_probability(&st, &complete, &spec).unwrap()[0], 1.0);
    }

    #[test]
    fn thinned_likelihood_matches_latent_sum() {
        // z = 4, λ = 10, π = 0.5; oracle sums over the latent true count.
        let mut data = toy(1, vec![], vec![], false);
        data.z = vec![4];
        let spec = ModelSpec::default();
        let mut st = ParameterState::initial(&spec, &data);
        st.alpha = vec![10f64.ln()];
        st.beta = vec![0.0];
        let got = marginal_log_likelihood(&st, &data, &spec).unwrap();
        let oracle: f64 = (4..=200u64)
            .map(|y| (binomial_ln_pmf(4, y, 0.5) + poisson_ln_pmf(y, 10.0)).exp())
            .sum::<f64>()
            .ln();
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
        assert!((got + 1.740302).abs() < 1e-6);
    }

    #[test]
    fn negbin_approaches_poisson_for_large_dispersion() {
        let mut data = toy(1, vec![], vec![], false);
        data.z = vec![4];
        let mut spec = ModelSpec::default();
        let mut st = ParameterState::initial(&spec, &data);
        st.alpha = vec![10f64.ln()];
        st.beta = vec![0.0];
        let pois = marginal_log_likelihood(&st, &data, &spec).unwrap();
        spec.family = Family::NegativeBinomial;
        st.dispersion = 1e8;
        let nb = marginal_log_likelihood(&st, &data, &spec).unwrap();
        assert!((nb - pois).abs() < 1e-4);
    }

    #[test]
    fn complete_data_ignores_beta() {
        let data = toy(3, vec![0.1, 0.5, 0.9], vec![1.0, -1.0, 0.3], true);
        let spec = spec_with(1, 1);
        let mut a = ParameterState::initial(&spec, &data);
        a.alpha = vec![1.2, 0.4];
        let mut b = a.clone();
        a.beta = vec![0.3, -2.0];
        b.beta = vec![-5.0, 9.0];
        assert_eq!(
            marginal_log_likelihood(&a, &data, &spec).unwrap(),
            marginal_log_likelihood(&b, &data, &spec).unwrap()
        );
        let poisson: f64 = [0.1f64, 0.5, 0.9]
            .iter()
            .map(|x| poisson_ln_pmf(4, (1.2 + 0.4 * x).exp()))
            .sum();
        assert!((marginal_log_likelihood(&a, &data, &spec).unwrap() - poisson).abs() < 1e-12);
    }

    #[test]
    fn icar_examples() {
        let g = AdjacencyGraph::from_edges(2, &[(0, 1)]).unwrap();
        assert!((icar_log_density(&[1.0, -1.0], 1.0, &g).unwrap() + 2.0).abs() < 1e-15);
        let nu: f64 = 0.7;
        let zero = icar_log_density(&[0.0, 0.0], nu, &g).unwrap();
        assert!((zero + nu.ln()).abs() < 1e-15);
        assert!(matches!(
            icar_log_density(&[1.0, 0.0], 1.0, &g),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn icar_translation_invariance_on_lattice() {
        let g = AdjacencyGraph::lattice(10, 10);
        let mut phi: Vec<f64> = (0..100).map(|s| ((s * 37) % 11) as f64 * 0.1).collect();
        g.center_per_component(&mut phi);
        let base = icar_log_density(&phi, 0.5, &g).unwrap();
        let mut shifted: Vec<f64> = phi.iter().map(|v| v + 3.7).collect();
        g.center_per_component(&mut shifted);
        assert!((icar_log_density(&shifted, 0.5, &g).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn prior_mode_and_boundaries() {
        let data = toy(3, vec![], vec![], false);
        let spec = ModelSpec {
            include_iid_process: true,
            include_iid_reporting: true,
            priors: PriorSpec {
                beta0_mean: 0.6,
                beta0_sd: 0.6,
                ..PriorSpec::default()
            },
            ..ModelSpec::default()
        };
        let st = ParameterState::initial(&spec, &data);
        let at_mode = log_prior(&st, &data, &spec).unwrap();
        assert!(at_mode.is_finite());
        let mut far = st.clone();
        far.beta[0] = -1.0;
        let mut nearer = st.clone();
        nearer.beta[0] = 0.0;
        let (lf, ln) = (
            log_prior(&far, &data, &spec).unwrap(),
            log_prior(&nearer, &data, &spec).unwrap(),
        );
        assert!(lf < ln && ln < at_mode);

        let mut zero_sigma = st.clone();
        zero_sigma.sigma = 0.0;
        assert_eq!(log_prior(&zero_sigma, &data, &spec).unwrap(), f64::NEG_INFINITY);

        // γ ≡ 0: doubling ε shifts the γ density by −n ln 2; the half-normal
        // term for ε is accounted for separately.
        let mut doubled = st.clone();
        doubled.epsilon = 2.0 * st.epsilon;
        let n = data.n_obs() as f64;
        let hn = |e: f64| dist::half_normal_ln_pdf(e, 1.0);
        let diff = log_prior(&doubled, &data, &spec).unwrap() - at_mode;
        let expected = -n * std::f64::consts::LN_2 + hn(doubled.epsilon) - hn(st.epsilon);
        assert!((diff - expected).abs() < 1e-12);
        assert!((iid_log_density(&[0.0; 3], 1.0) - iid_log_density(&[0.0; 3], 0.5) + 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn posterior_is_likelihood_plus_prior() {
        let data = toy(3, vec![0.2, 0.4, 0.6], vec![0.1, 0.0, -0.1], false);
        let spec = spec_with(1, 1);
        let mut st = ParameterState::initial(&spec, &data);
        st.alpha = vec![1.0, 0.3];
        st.beta = vec![0.2, 0.1];
        let lp = log_posterior(&st, &data, &spec).unwrap();
        let sum = marginal_log_likelihood(&st, &data, &spec).unwrap()
            + log_prior(&st, &data, &spec).unwrap();
        assert!((lp - sum).abs() < 1e-12);
    }

    #[test]
    fn posterior_orders_by_beta0_prior_when_complete() {
        let data = toy(3, vec![], vec![], true);
        let spec = ModelSpec {
            priors: PriorSpec {
                beta0_mean: 1.0,
                beta0_sd: 0.5,
                ..PriorSpec::default()
            },
            ..ModelSpec::default()
        };
        let mut near = ParameterState::initial(&spec, &data);
        near.beta[0] = 0.8;
        let mut far = near.clone();
        far.beta[0] = -0.5;
        assert_eq!(
            marginal_log_likelihood(&near, &data, &spec).unwrap(),
            marginal_log_likelihood(&far, &data, &spec).unwrap()
        );
        assert!(log_posterior(&near, &data, &spec).unwrap() > log_posterior(&far, &data, &spec).unwrap());
    }

    #[test]
    fn posterior_differences_track_likelihood_under_flat_priors() {
        let data = toy(3, vec![0.2, 0.4, 0.6], vec![], false);
        let spec = ModelSpec {
            process_terms: vec![Term::new("x", 1)],
            priors: PriorSpec {
                alpha0_sd: 1e12,
                beta0_sd: 1e12,
                coef_sd: 1e12,
                ..PriorSpec::default()
            },
            ..ModelSpec::default()
        };
        let mut a = ParameterState::initial(&spec, &data);
        a.alpha = vec![1.0, 0.5];
        let mut b = a.clone();
        b.alpha = vec![1.5, -0.5];
        let dpost = log_posterior(&a, &data, &spec).unwrap() - log_posterior(&b, &data, &spec).unwrap();
        let dlik = marginal_log_likelihood(&a, &data, &spec).unwrap()
            - marginal_log_likelihood(&b, &data, &spec).unwrap();
        assert!((dpost - dlik).abs() < 1e-9);
    }

    #[test]
    fn spec_validation() {
        let mut spec = ModelSpec {
            process_terms: vec![Term::new("a", 2)],
            reporting_terms: vec![Term::new("a", 1)],
            ..ModelSpec::default()
        };
        assert!(spec.validate().is_err());
        spec.reporting_terms = vec![Term::new("b", 0)];
        assert!(spec.validate().is_err());
        spec.reporting_terms = vec![Term::new("b", 3)];
        assert!(spec.validate().is_ok());
        spec.priors.coef_sd = 0.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn layout_round_trip() {
        let data = toy(4, vec![0.1, 0.2, 0.3, 0.4], vec![], false);
        let spec = ModelSpec {
            process_terms: vec![Term::new("x", 1)],
            include_icar: true,
            include_iid_reporting: true,
            family: Family::NegativeBinomial,
            ..ModelSpec::default()
        };
        let layout = ParameterLayout::new(&spec, &data);
        assert_eq!(layout.len(), 2 + 1 + 4 + 4 + 2 + 1);
        assert_eq!(layout.names()[0], "alpha[0]");
        assert_eq!(layout.index_of("nu"), Some(11));
        let mut st = ParameterState::initial(&spec, &data);
        st.phi = vec![0.1, -0.2, 0.3, -0.2];
        st.gamma_re = vec![1.0, 2.0, 3.0, 4.0];
        let back = layout.unpack(&layout.pack(&st), &data, &spec);
        assert_eq!(back.phi, st.phi);
        assert_eq!(back.gamma_re, st.gamma_re);
        assert_eq!(back.dispersion, st.dispersion);
    }
}
