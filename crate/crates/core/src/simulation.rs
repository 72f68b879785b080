//! Synthetic data: the lattice design used for the simulation studies and a
//! generator for data in the tuberculosis schema.
//!
//! Generated truth lives in [`HiddenTruth`], separate from the
//! [`SimulatedData`] handed to the fitting code.

use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ObservationTable;
use crate::dist::{logistic, sample_binomial, sample_poisson, standard_normal};
use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::rng::{stream_rng, DOMAIN_SIMULATION};

/// Spectral factorisation of a graph Laplacian, reusable across ICAR draws.
#[derive(Debug, Clone)]
pub struct IcarSpectrum {
    n: usize,
    /// `(eigenvalue, eigenvector)` pairs on the non-null space.
    modes: Vec<(f64, Vec<f64>)>,
    graph: AdjacencyGraph,
}

impl IcarSpectrum {
    pub fn new(graph: &AdjacencyGraph) -> Self {
        let n = graph.n_regions();
        let eig = SymmetricEigen::new(graph.laplacian());
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let tol = 1e-9 * max.max(1.0);
        // Null space dimension is the number of components; drop the
        // smallest eigenvalues accordingly so round-off cannot leak in.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let modes = order
            .into_iter()
            .skip(graph.n_components())
            .filter(|&k| eig.eigenvalues[k] > tol)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()))
            .collect();
        Self {
            n,
            modes,
            graph: graph.clone(),
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.0).collect()
    }

    /// One draw from the proper Gaussian on the sum-to-zero subspace with
    /// precision `L/ν²`.
    pub fn sample<R: Rng + ?Sized>(&self, nu: f64, rng: &mut R) -> Vec<f64> {
        let mut phi = vec![0.0; self.n];
        if nu <= 0.0 {
            return phi;
        }
        for (lambda, v) in &self.modes {
            let c = nu / lambda.sqrt() * standard_normal(rng);
            for (p, e) in phi.iter_mut().zip(v) {
                *p += c * e;
            }
        }
        self.graph.center_per_component(&mut phi);
        phi
    }
}

/// One ICAR(ν²) draw over `graph`, centred per component.
pub fn simulate_icar<R: Rng + ?Sized>(graph: &AdjacencyGraph, nu: f64, rng: &mut R) -> Vec<f64> {
    IcarSpectrum::new(graph).sample(nu, rng)
}

/// Proxies `v = ρ·w + √(1−ρ²)·e` with `e ~ U(−1, 1)`, one per `ρ`.
pub fn make_proxy_covariates<R: Rng + ?Sized>(w: &[f64], rhos: &[f64], rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if let Some(r) = rhos.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::Argument(format!("proxy correlation {r} is outside [0, 1]")));
    }
    Ok(rhos
        .iter()
        .map(|&rho| {
            let k = (1.0 - rho * rho).sqrt();
            w.iter().map(|&wi| rho * wi + k * rng.random_range(-1.0..1.0)).collect()
        })
        .collect())
}

/// Column name of the proxy covariate with correlation `rho`.
pub fn proxy_name(rho: f64) -> String {
    format!("v_{rho:.2}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Regions form a `side × side` rook lattice.
    pub lattice_side: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub nu: f64,
    /// Sd of the reporting noise `γ_s`; 0 disables it.
    pub epsilon: f64,
    /// Sd of an unstructured process effect `θ_s`; 0 disables it.
    pub sigma: f64,
    pub proxy_rhos: Vec<f64>,
    /// Fraction of regions flagged completely reported (`π = 1`).
    pub complete_fraction: f64,
    /// Sets `π ≡ 1` everywhere.
    pub force_complete_reporting: bool,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            lattice_side: 10,
            alpha0: 4.0,
            alpha1: 1.0,
            beta0: 0.0,
            beta1: 2.0,
            nu: 0.5,
            epsilon: 0.5,
            sigma: 0.0,
            proxy_rhos: vec![0.9, 0.75, 0.6, 0.45, 0.3],
            complete_fraction: 0.0,
            force_complete_reporting: false,
            seed: 1,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lattice_side < 2 {
            return Err(Error::Config("lattice_side must be at least 2".into()));
        }
        if self.nu < 0.0 || self.epsilon < 0.0 || self.sigma < 0.0 {
            return Err(Error::Config("scale parameters must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.complete_fraction) {
            return Err(Error::Config("complete_fraction must lie in [0, 1]".into()));
        }
        if self.proxy_rhos.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("proxy correlations must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// What the fitting code may see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedData {
    pub table: ObservationTable,
    pub graph: AdjacencyGraph,
}

/// Generating values kept back for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenTruth {
    pub y: Vec<u64>,
    pub log_lambda: Vec<f64>,
    pub pi: Vec<f64>,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

/// Simulates one lattice dataset. Covariates `x`, `w` and one proxy per
/// configured correlation (see [`proxy_name`]) are stored in the table.
pub fn simulate_dataset(config: &SimulationConfig) -> Result<(SimulatedData, HiddenTruth)> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, DOMAIN_SIMULATION, 0);
    let side = config.lattice_side;
    let graph = AdjacencyGraph::lattice(side, side);
    let n = graph.n_regions();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let phi = simulate_icar(&graph, config.nu, &mut rng);
    let theta: Vec<f64> = (0..n).map(|_| config.sigma * standard_normal(&mut rng)).collect();
    let gamma: Vec<f64> = (0..n).map(|_| config.epsilon * standard_normal(&mut rng)).collect();
    let proxies = make_proxy_covariates(&w, &config.proxy_rhos, &mut rng)?;

    let mut complete = vec![false; n];
    let n_complete = (config.complete_fraction * n as f64).round() as usize;
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    for &s in &ids[..n_complete] {
        complete[s] = true;
    }

    let log_lambda: Vec<f64> = (0..n)
        .map(|s| config.alpha0 + config.alpha1 * x[s] + phi[s] + theta[s])
        .collect();
    let pi: Vec<f64> = (0..n)
        .map(|s| {
            if config.force_complete_reporting || complete[s] {
                1.0
            } else {
                logistic(config.beta0 + config.beta1 * w[s] + gamma[s])
            }
        })
        .collect();
    let y: Vec<u64> = log_lambda.iter().map(|l| sample_poisson(&mut rng, l.exp())).collect();
    let z: Vec<u64> = (0..n).map(|s| sample_binomial(&mut rng, y[s], pi[s])).collect();

    let mut covariates = BTreeMap::new();
    covariates.insert("x".to_string(), x.clone());
    covariates.insert("w".to_string(), w.clone());
    for (rho, v) in config.proxy_rhos.iter().zip(proxies) {
        covariates.insert(proxy_name(*rho), v);
    }
    let table = ObservationTable {
        region_ids: (0..n).map(|s| format!("R{:03}", s + 1)).collect(),
        group_ids: vec!["all".into()],
        z,
        region: (0..n).collect(),
        group: vec![0; n],
        time: vec![0; n],
        offset: vec![0.0; n],
        complete: complete.iter().map(|&c| c || config.force_complete_reporting).collect(),
        covariates,
    };
    Ok((
        SimulatedData { table, graph },
        HiddenTruth {
            y,
            log_lambda,
            pi,
            phi,
            theta,
            gamma,
            x,
            w,
        },
    ))
}

/// Rook adjacency over the first `n` cells of a grid `cols` wide, filled
/// row by row; connected for any `n`.
pub fn truncated_grid(n: usize, cols: usize) -> AdjacencyGraph {
    let mut edges = Vec::new();
    for s in 0..n {
        let c = s % cols;
        if c + 1 < cols && s + 1 < n {
            edges.push((s, s + 1));
        }
        if s + cols < n {
            edges.push((s, s + cols));
        }
    }
    AdjacencyGraph::from_edges(n, &edges).expect("grid edges are valid")
}

/// Covariate names of the tuberculosis schema.
pub const TB_PROCESS_COVARIATES: [&str; 4] = ["unemployment", "urbanisation", "density", "indigenous"];
pub const TB_REPORTING_COVARIATE: &str = "timeliness";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TbSchemaConfig {
    pub n_regions: usize,
    pub years: Vec<i64>,
    pub alpha0: f64,
    pub beta0: f64,
    /// Change in logit π from the lowest to the highest timeliness.
    pub timeliness_effect: f64,
    pub nu: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TbSchemaConfig {
    fn default() -> Self {
        Self {
            n_regions: 557,
            years: vec![2012, 2013, 2014],
            alpha0: -8.0,
            beta0: 2.0,
            timeliness_effect: 1.5,
            nu: 0.4,
            sigma: 0.1,
            epsilon: 0.2,
            seed: 1,
        }
    }
}

/// Synthetic micro-region × year data with the tuberculosis columns:
/// counts, population offset, four deprivation covariates for the process
/// and treatment timeliness for reporting. Region-level covariates are
/// constant across years; `γ` varies by region and year.
pub fn simulate_tb_schema(config: &TbSchemaConfig) -> Result<(SimulatedData, HiddenTruth)> {
    if config.n_regions < 4 || config.years.is_empty() {
        return Err(Error::Config("need at least 4 regions and one year".into()));
    }
    let mut rng = stream_rng(config.seed, DOMAIN_SIMULATION, 1);
    let r = config.n_regions;
    let graph = truncated_grid(r, (r as f64).sqrt().ceil() as usize);
    let unemployment: Vec<f64> = (0..r).map(|_| rng.random_range(0.03..0.18)).collect();
    let urbanisation: Vec<f64> = (0..r).map(|_| rng.random_range(0.3..1.0)).collect();
    let density: Vec<f64> = (0..r).map(|_| rng.random_range(0.5..1.1)).collect();
    let indigenous: Vec<f64> = (0..r).map(|_| 0.3 * rng.random::<f64>().powi(3)).collect();
    let timeliness: Vec<f64> = (0..r).map(|_| rng.random_range(0.05..0.95)).collect();
    let base_pop: Vec<f64> = (0..r).map(|_| (11.5 + 0.9 * standard_normal(&mut rng)).exp()).collect();
    let phi = simulate_icar(&graph, config.nu, &mut rng);
    let theta: Vec<f64> = (0..r).map(|_| config.sigma * standard_normal(&mut rng)).collect();

    let process = |s: usize| {
        5.5 * (unemployment[s] - 0.105) + 1.1 * (urbanisation[s] - 0.65) + 0.8 * (density[s] - 0.8)
            - 0.6 * (density[s] - 0.8).powi(2)
            + 1.5 * (indigenous[s] - 0.075)
    };
    let reporting = |s: usize| config.timeliness_effect * (timeliness[s] - 0.5) / 0.9;

    let mut table = ObservationTable {
        region_ids: (0..r).map(|s| format!("MR{:03}", s + 1)).collect(),
        group_ids: vec!["all".into()],
        z: Vec::new(),
        region: Vec::new(),
        group: Vec::new(),
        time: Vec::new(),
        offset: Vec::new(),
        complete: Vec::new(),
        covariates: BTreeMap::new(),
    };
    let mut truth = HiddenTruth {
        y: Vec::new(),
        log_lambda: Vec::new(),
        pi: Vec::new(),
        phi: phi.clone(),
        theta: theta.clone(),
        gamma: Vec::new(),
        x: Vec::new(),
        w: Vec::new(),
    };
    let cols: [(&str, &Vec<f64>); 5] = [
        ("unemployment", &unemployment),
        ("urbanisation", &urbanisation),
        ("density", &density),
        ("indigenous", &indigenous),
        ("timeliness", &timeliness),
    ];
    for (k, &year) in config.years.iter().enumerate() {
        for s in 0..r {
            // Whole-number populations so the file layout round-trips.
            let log_pop = (base_pop[s] * (0.01 * k as f64).exp()).round().max(1.0).ln();
            let ll = log_pop + config.alpha0 + process(s) + phi[s] + theta[s];
            let g = config.epsilon * standard_normal(&mut rng);
            let pi = logistic(config.beta0 + reporting(s) + g);
            let y = sample_poisson(&mut rng, ll.exp());
            let z = sample_binomial(&mut rng, y, pi);
            table.z.push(z);
            table.region.push(s);
            table.group.push(0);
            table.time.push(year);
            table.offset.push(log_pop);
            table.complete.push(false);
            for (name, col) in cols {
                table.covariates.entry(name.to_string()).or_default().push(col[s]);
            }
            truth.y.push(y);
            truth.log_lambda.push(ll);
            truth.pi.push(pi);
            truth.gamma.push(g);
            truth.x.push(unemployment[s]);
            truth.w.push(timeliness[s]);
        }
    }
    Ok((SimulatedData { table, graph }, truth))
}
