use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::model::{CountDataset, ModelSpec, Term, Unit};
use crate::ortho_poly::OrthoPolyBasis;

/// Raw observations before basis expansion: one entry per region-time unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationTable {
    /// External region labels, indexed by internal region id.
    pub region_ids: Vec<String>,
    /// External group labels, indexed by internal group id.
    pub group_ids: Vec<String>,
    pub z: Vec<u64>,
    pub region: Vec<usize>,
    pub group: Vec<usize>,
    pub time: Vec<i64>,
    /// Log-population (or other log-exposure); 0 when absent.
    pub offset: Vec<f64>,
    pub complete: Vec<bool>,
    pub covariates: BTreeMap<String, Vec<f64>>,
}

impl ObservationTable {
    pub fn n_obs(&self) -> usize {
        self.z.len()
    }

    pub fn covariate(&self, name: &str) -> Result<&[f64]> {
        self.covariates
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Config(format!("unknown covariate '{name}'")))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_obs();
        let lens = [
            ("region", self.region.len()),
            ("group", self.group.len()),
            ("time", self.time.len()),
            ("offset", self.offset.len()),
            ("complete", self.complete.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return Err(Error::Data(format!("column '{name}' has {len} rows, expected {n}")));
            }
        }
        for (name, col) in &self.covariates {
            if col.len() != n {
                return Err(Error::Data(format!(
                    "covariate '{name}' has {} rows, expected {n}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("covariate '{name}' has non-finite values")));
            }
        }
        if let Some(&r) = self.region.iter().find(|&&r| r >= self.region_ids.len()) {
            return Err(Error::Data(format!("region index {r} has no label")));
        }
        if let Some(&g) = self.group.iter().find(|&&g| g >= self.group_ids.len().max(1)) {
            return Err(Error::Data(format!("group index {g} has no label")));
        }
        Ok(())
    }
}

/// A fitted basis for one model term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermBasis {
    pub term: Term,
    pub basis: OrthoPolyBasis,
    /// First coefficient index of this term (the intercept is index 0).
    pub first_coef: usize,
}

impl TermBasis {
    pub fn coef_range(&self) -> std::ops::Range<usize> {
        self.first_coef..self.first_coef + self.term.degree
    }
}

/// Bases fitted on the training covariates, needed to evaluate effects at
/// new covariate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub process: Vec<TermBasis>,
    pub reporting: Vec<TermBasis>,
}

fn fit_terms(table: &ObservationTable, terms: &[Term]) -> Result<Vec<TermBasis>> {
    let mut first = 1;
    terms
        .iter()
        .map(|t| {
            let basis = OrthoPolyBasis::fit(table.covariate(&t.covariate)?, t.degree).map_err(
                |e| Error::BasisFit(format!("covariate '{}': {e}", t.covariate)),
            )?;
            let tb = TermBasis {
                term: t.clone(),
                basis,
                first_coef: first,
            };
            first += t.degree;
            Ok(tb)
        })
        .collect()
}

fn design_matrix(table: &ObservationTable, bases: &[TermBasis]) -> Result<DMatrix<f64>> {
    let n = table.n_obs();
    let cols: usize = bases.iter().map(|b| b.term.degree).sum();
    let mut m = DMatrix::zeros(n, cols);
    let mut c0 = 0;
    for tb in bases {
        let x = table.covariate(&tb.term.covariate)?;
        for (i, &xi) in x.iter().enumerate() {
            for (k, v) in tb.basis.evaluate_point(xi).into_iter().enumerate() {
                m[(i, c0 + k)] = v;
            }
        }
        c0 += tb.term.degree;
    }
    Ok(m)
}

impl Design {
    pub fn fit(table: &ObservationTable, spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            process: fit_terms(table, &spec.process_terms)?,
            reporting: fit_terms(table, &spec.reporting_terms)?,
        })
    }

    pub fn process_term(&self, covariate: &str) -> Option<&TermBasis> {
        self.process.iter().find(|t| t.term.covariate == covariate)
    }

    pub fn reporting_term(&self, covariate: &str) -> Option<&TermBasis> {
        self.reporting.iter().find(|t| t.term.covariate == covariate)
    }

    /// Expands `table` into a model-ready dataset using these bases.
    pub fn build(&self, table: &ObservationTable, graph: &AdjacencyGraph) -> Result<CountDataset> {
        table.validate()?;
        if table.region_ids.len() != graph.n_regions() {
            return Err(Error::Data(format!(
                "table has {} regions but the graph has {}",
                table.region_ids.len(),
                graph.n_regions()
            )));
        }
        let units = (0..table.n_obs())
            .map(|i| Unit {
                group: table.group[i],
                time: table.time[i],
                region: table.region[i],
            })
            .collect();
        CountDataset::new(
            table.z.clone(),
            units,
            design_matrix(table, &self.process)?,
            design_matrix(table, &self.reporting)?,
            table.offset.clone(),
            table.complete.clone(),
            graph.clone(),
        )
    }
}

/// Fits the bases on `table` and builds the dataset in one go.
pub fn prepare(
    table: &ObservationTable,
    graph: &AdjacencyGraph,
    spec: &ModelSpec,
) -> Result<(CountDataset, Design)> {
    let design = Design::fit(table, spec)?;
    let data = design.build(table, graph)?;
    Ok((data, design))
}
