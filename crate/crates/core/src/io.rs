//! Delimited-text ingest/export, posterior sample files and run manifests.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::hash::sha256_hex;
use crate::mcmc::{PosteriorSamples, SamplesMeta};

/// Column mapping for an observation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSchema {
    pub region_column: String,
    pub time_column: String,
    pub count_column: String,
    /// Column holding exposure; its log becomes the offset.
    pub population_column: Option<String>,
    /// Column holding the offset directly. Ignored if `population_column` is set.
    pub offset_column: Option<String>,
    /// 0/1 or true/false; absent means no unit is known to be complete.
    pub complete_column: Option<String>,
    pub group_column: Option<String>,
    /// Covariates to load. Empty means every column not claimed above.
    pub covariates: Vec<String>,
}

impl Default for DataSchema {
    fn default() -> Self {
        Self {
            region_column: "region".into(),
            time_column: "time".into(),
            count_column: "count".into(),
            population_column: None,
            offset_column: Some("offset".into()),
            complete_column: Some("complete".into()),
            group_column: Some("group".into()),
            covariates: Vec::new(),
        }
    }
}

impl DataSchema {
    /// Layout of the tuberculosis notification files.
    pub fn tuberculosis() -> Self {
        Self {
            region_column: "region".into(),
            time_column: "year".into(),
            count_column: "cases".into(),
            population_column: Some("population".into()),
            offset_column: None,
            complete_column: None,
            group_column: None,
            covariates: ["unemployment", "urbanisation", "density", "indigenous", "timeliness"]
                .map(String::from)
                .to_vec(),
        }
    }
}

/// Ingested observations plus their neighbourhood graph.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub table: ObservationTable,
    pub graph: AdjacencyGraph,
    /// Neighbour pairs listed in one direction only (symmetrised).
    pub one_directional_pairs: usize,
}

fn ingest_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Reads the observation file. Region labels are numbered in order of
/// first appearance.
pub fn read_observations(path: &Path, schema: &DataSchema) -> Result<ObservationTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ingest_err(path, 1, format!("missing column '{name}'")))
    };
    let region_c = col(&schema.region_column)?;
    let time_c = col(&schema.time_column)?;
    let count_c = col(&schema.count_column)?;
    let pop_c = schema.population_column.as_deref().map(col).transpose()?;
    let offset_c = match pop_c {
        Some(_) => None,
        None => schema
            .offset_column
            .as_deref()
            .and_then(|n| headers.iter().position(|h| h == n)),
    };
    let complete_c = schema
        .complete_column
        .as_deref()
        .and_then(|n| headers.iter().position(|h| h == n));
    let group_c = schema
        .group_column
        .as_deref()
        .and_then(|n| headers.iter().position(|h| h == n));
    let claimed: BTreeSet<usize> = [Some(region_c), Some(time_c), Some(count_c), pop_c, offset_c, complete_c, group_c]
        .into_iter()
        .flatten()
        .collect();
    let cov_cols: Vec<(String, usize)> = if schema.covariates.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !claimed.contains(i))
            .map(|(i, h)| (h.to_string(), i))
            .collect()
    } else {
        schema
            .covariates
            .iter()
            .map(|n| col(n).map(|i| (n.clone(), i)))
            .collect::<Result<_>>()?
    };

    let mut table = ObservationTable {
        region_ids: Vec::new(),
        group_ids: Vec::new(),
        z: Vec::new(),
        region: Vec::new(),
        group: Vec::new(),
        time: Vec::new(),
        offset: Vec::new(),
        complete: Vec::new(),
        covariates: cov_cols.iter().map(|(n, _)| (n.clone(), Vec::new())).collect(),
    };
    let mut region_index: HashMap<String, usize> = HashMap::new();
    let mut group_index: HashMap<String, usize> = HashMap::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        let field = |c: usize, what: &str| -> Result<&str> {
            match rec.get(c) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(ingest_err(path, line, format!("missing value for '{what}'"))),
            }
        };
        let number = |c: usize, what: &str| -> Result<f64> {
            let s = field(c, what)?;
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ingest_err(path, line, format!("'{what}' is not a finite number: '{s}'")))
        };

        let r = field(region_c, &schema.region_column)?.to_string();
        let n_regions = region_index.len();
        let ri = *region_index.entry(r.clone()).or_insert_with(|| {
            table.region_ids.push(r);
            n_regions
        });
        let t_raw = field(time_c, &schema.time_column)?;
        let t = t_raw
            .parse::<i64>()
            .map_err(|_| ingest_err(path, line, format!("time '{t_raw}' is not an integer")))?;
        let z_raw = field(count_c, &schema.count_column)?;
        let z = z_raw
            .parse::<u64>()
            .map_err(|_| ingest_err(path, line, format!("count '{z_raw}' is not a non-negative integer")))?;
        let offset = if let Some(c) = pop_c {
            let p = number(c, schema.population_column.as_deref().unwrap_or_default())?;
            if p <= 0.0 {
                return Err(ingest_err(path, line, format!("population {p} must be positive")));
            }
            p.ln()
        } else if let Some(c) = offset_c {
            number(c, "offset")?
        } else {
            0.0
        };
        let complete = match complete_c {
            Some(c) => {
                let s = field(c, "complete")?;
                parse_bool(s).ok_or_else(|| ingest_err(path, line, format!("complete flag '{s}' is not 0/1")))?
            }
            None => false,
        };
        let gi = match group_c {
            Some(c) => {
                let g = field(c, "group")?.to_string();
                let n_groups = group_index.len();
                *group_index.entry(g.clone()).or_insert_with(|| {
                    table.group_ids.push(g);
                    n_groups
                })
            }
            None => 0,
        };
        for (name, c) in &cov_cols {
            let v = number(*c, name)?;
            table.covariates.get_mut(name).expect("column registered").push(v);
        }
        table.region.push(ri);
        table.group.push(gi);
        table.time.push(t);
        table.z.push(z);
        table.offset.push(offset);
        table.complete.push(complete);
    }
    if table.z.is_empty() {
        return Err(ingest_err(path, 1, "no data rows"));
    }
    if table.group_ids.is_empty() {
        table.group_ids.push("all".into());
    }
    table.validate()?;
    Ok(table)
}

/// Reads "region_id neighbor_id" pairs (whitespace or comma separated;
/// `#` starts a comment). A line holding a single id just declares the
/// region. Regions without neighbours become singleton components.
pub fn read_adjacency(path: &Path, region_ids: &[String]) -> Result<(AdjacencyGraph, usize)> {
    let text = fs::read_to_string(path)?;
    let index: HashMap<&str, usize> = region_ids.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
    let lookup = |id: &str, line: usize| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| ingest_err(path, line, format!("unknown region '{id}'")))
    };
    let mut directed: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("");
        let ids: Vec<&str> = content
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        match ids.as_slice() {
            [] => {}
            [a] => {
                lookup(a, line)?;
            }
            [a, b] => {
                let (i, j) = (lookup(a, line)?, lookup(b, line)?);
                if i == j {
                    return Err(ingest_err(path, line, format!("region '{a}' listed as its own neighbour")));
                }
                directed.insert((i, j));
            }
            _ => return Err(ingest_err(path, line, "expected 'region_id neighbor_id'")),
        }
    }
    let one_directional = directed.iter().filter(|&&(i, j)| !directed.contains(&(j, i))).count();
    if one_directional > 0 {
        log::warn!(
            "{}: {one_directional} neighbour pair(s) listed in one direction only; symmetrised",
            path.display()
        );
    }
    let edges: BTreeSet<(usize, usize)> = directed.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    Ok((AdjacencyGraph::from_edges(region_ids.len(), &edges)?, one_directional))
}

pub fn ingest_dataset(data_path: &Path, adjacency_path: &Path, schema: &DataSchema) -> Result<Ingested> {
    let table = read_observations(data_path, schema)?;
    let (graph, one_directional_pairs) = read_adjacency(adjacency_path, &table.region_ids)?;
    Ok(Ingested {
        table,
        graph,
        one_directional_pairs,
    })
}

/// Writes a table readable with `DataSchema::default()`. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_observations(path: &Path, table: &ObservationTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["region", "time", "group", "count", "offset", "complete"];
    header.extend(table.covariates.keys().map(String::as_str));
    w.write_record(&header)?;
    for i in 0..table.n_obs() {
        let mut row = vec![
            table.region_ids[table.region[i]].clone(),
            table.time[i].to_string(),
            table.group_ids[table.group[i]].clone(),
            table.z[i].to_string(),
            table.offset[i].to_string(),
            u8::from(table.complete[i]).to_string(),
        ];
        row.extend(table.covariates.values().map(|c| c[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a table in the tuberculosis layout of [`DataSchema::tuberculosis`]:
/// population is `exp(offset)` rounded to a whole number.
pub fn write_tb_observations(path: &Path, table: &ObservationTable) -> Result<()> {
    let schema = DataSchema::tuberculosis();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["region", "year", "cases", "population"];
    header.extend(schema.covariates.iter().map(String::as_str));
    w.write_record(&header)?;
    for i in 0..table.n_obs() {
        let mut row = vec![
            table.region_ids[table.region[i]].clone(),
            table.time[i].to_string(),
            table.z[i].to_string(),
            format!("{}", table.offset[i].exp().round()),
        ];
        for c in &schema.covariates {
            row.push(table.covariate(c)?[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every neighbour pair in both directions.
pub fn write_adjacency(path: &Path, graph: &AdjacencyGraph, region_ids: &[String]) -> Result<()> {
    let mut out = String::new();
    for s in 0..graph.n_regions() {
        if graph.degree(s) == 0 {
            out.push_str(&region_ids[s]);
            out.push('\n');
        }
    }
    for s in 0..graph.n_regions() {
        for &t in graph.neighbors(s) {
            out.push_str(&format!("{} {}\n", region_ids[s], region_ids[t]));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Serialises rows of a flat record type as CSV.
pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SamplesSidecar {
    names: Vec<String>,
    n_chains: usize,
    n_draws: usize,
    meta: SamplesMeta,
}

pub const SAMPLES_SIDECAR: &str = "samples.json";

/// `chain_<k>.csv` (one column per parameter) plus a JSON sidecar. Returns
/// the files written.
pub fn write_samples(dir: &Path, samples: &PosteriorSamples) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let p = samples.n_params();
    for (k, chain) in samples.chains.iter().enumerate() {
        let path = dir.join(format!("chain_{k}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&samples.names)?;
        for row in chain.chunks(p) {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        written.push(path);
    }
    let sidecar = dir.join(SAMPLES_SIDECAR);
    write_json(
        &sidecar,
        &SamplesSidecar {
            names: samples.names.clone(),
            n_chains: samples.n_chains(),
            n_draws: samples.n_draws(),
            meta: samples.meta.clone(),
        },
    )?;
    written.push(sidecar);
    Ok(written)
}

pub fn read_samples(dir: &Path) -> Result<PosteriorSamples> {
    let side: SamplesSidecar = read_json(&dir.join(SAMPLES_SIDECAR))?;
    let mut chains = Vec::with_capacity(side.n_chains);
    for k in 0..side.n_chains {
        let path = dir.join(format!("chain_{k}.csv"));
        let mut r = csv::Reader::from_path(&path)?;
        if r.headers()?.iter().ne(side.names.iter().map(String::as_str)) {
            return Err(ingest_err(&path, 1, "header does not match the sidecar parameter names"));
        }
        let mut values = Vec::with_capacity(side.n_draws * side.names.len());
        for (i, rec) in r.records().enumerate() {
            for v in rec?.iter() {
                values.push(
                    v.parse::<f64>()
                        .map_err(|_| ingest_err(&path, i + 2, format!("'{v}' is not a number")))?,
                );
            }
        }
        chains.push(values);
    }
    let s = PosteriorSamples::new(side.names, chains, side.meta)?;
    if s.n_draws() != side.n_draws {
        return Err(Error::Data(format!(
            "sidecar declares {} draws per chain, files hold {}",
            side.n_draws,
            s.n_draws()
        )));
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&fs::read(path)?),
        })
    }
}

/// Record of one command invocation, written as `manifest.json` in the
/// output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub version: String,
    pub wall_clock_seconds: f64,
    /// Output paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub status: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
            status: "ok".into(),
        }
    }

    /// Digests the given outputs (relative to `out_dir`) and writes the
    /// manifest there.
    pub fn finish(&mut self, out_dir: &Path, outputs: &[PathBuf]) -> Result<PathBuf> {
        let mut seen = BTreeSet::new();
        self.outputs = outputs
            .iter()
            .filter(|p| seen.insert((*p).clone()))
            .map(|p| {
                let d = FileDigest::of(p)?;
                let rel = p.strip_prefix(out_dir).unwrap_or(p);
                Ok(FileDigest {
                    path: rel.display().to_string(),
                    sha256: d.sha256,
                })
            })
            .collect::<Result<_>>()?;
        let path = out_dir.join(MANIFEST_FILE);
        write_json(&path, self)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bool_flags() {
        assert_eq!(parse_bool("1"), Some(true));
        assert_eq!(parse_bool("False"), Some(false));
        assert_eq!(parse_bool("2"), None);
    }
}
