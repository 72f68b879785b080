use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use pogit::checking::{observed_stat, predictive_stat, prior_predictive_draws, PredictiveStat};
use pogit::data::{prepare, Design};
use pogit::elicitation::{approximate_rate_distribution, elicit_beta0_prior, AveragingScale, RateEstimate};
use pogit::experiments::{
    experiment_covariate_classification, experiment_covariate_strength, experiment_information_tradeoff,
    experiment_prior_sensitivity, ClassificationConfig, CovariateStrengthConfig, InformationTradeoffConfig,
    PriorSensitivityConfig,
};
use pogit::hash::dataset_digest;
use pogit::io::{ingest_dataset, read_json, read_samples, write_adjacency, write_json, write_observations, write_records, write_tb_observations, write_samples, DataSchema, FileDigest, RunManifest};
use pogit::mcmc::{run_chains, summarize, ChainConfig};
use pogit::model::{CountDataset, ModelSpec};
use pogit::prediction::{effect_curve, predict as predict_counts, replicate_observed, CountDraws, EffectScale, PredictionConfig, Submodel};
use pogit::simulation::{simulate_dataset, simulate_tb_schema, SimulationConfig, TbSchemaConfig};
use pogit::ErrorClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Outcome {
    Success = 0,
    Usage = 2,
    Data = 3,
    Numerical = 4,
}

/// Malformed configuration or arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Some experiment cells failed; their outputs are still written.
#[derive(Debug)]
pub struct CellFailures(pub usize);

impl Display for CellFailures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} experiment cell(s) failed; see the status column", self.0)
    }
}

impl std::error::Error for CellFailures {}

pub fn classify(e: &anyhow::Error) -> Outcome {
    for cause in e.chain() {
        if cause.is::<UsageError>() || cause.is::<toml::de::Error>() {
            return Outcome::Usage;
        }
        if cause.is::<CellFailures>() {
            return Outcome::Numerical;
        }
        if let Some(p) = cause.downcast_ref::<pogit::Error>() {
            return match p.class() {
                ErrorClass::Usage => Outcome::Usage,
                ErrorClass::Data => Outcome::Data,
                ErrorClass::Numerical => Outcome::Numerical,
            };
        }
        if cause.is::<std::io::Error>() {
            return Outcome::Data;
        }
    }
    Outcome::Numerical
}

/// Per-invocation state that ends up in the manifest.
pub struct RunContext {
    out_dir: PathBuf,
    seed: Option<u64>,
    command: String,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl RunContext {
    pub fn new(command: &str, out_dir: PathBuf, seed: Option<u64>) -> Self {
        Self {
            out_dir,
            seed,
            command: command.into(),
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn begin<T: Serialize>(&mut self, command: &str, config: &T) -> Result<()> {
        self.command = command.into();
        self.config = serde_json::to_value(config)?;
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok(())
    }

    fn seed(&mut self, name: &str, configured: &mut u64) {
        if let Some(s) = self.seed {
            *configured = s;
        }
        self.seeds.insert(name.into(), *configured);
    }

    fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn wrote(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        write_json(&p, value)?;
        self.wrote(p);
        Ok(())
    }

    fn records<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.path(name);
        write_records(&p, rows)?;
        self.wrote(p);
        Ok(())
    }

    fn table(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.wrote(p);
        Ok(())
    }

    pub fn write_manifest(&mut self, wall_clock: f64, result: &Result<()>) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        let mut m = RunManifest::new(&self.command);
        m.config = self.config.clone();
        m.seeds = self.seeds.clone();
        m.inputs = self
            .inputs
            .iter()
            .filter_map(|p| FileDigest::of(p).ok())
            .collect();
        m.wall_clock_seconds = wall_clock;
        m.status = match result {
            Ok(()) => "ok".into(),
            Err(e) => format!("error: {e:#}"),
        };
        let outputs: Vec<PathBuf> = self.outputs.iter().filter(|p| p.exists()).cloned().collect();
        m.finish(&self.out_dir, &outputs)?;
        Ok(())
    }
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), load)
}

/// Resolves a path from a config file against the file's directory.
fn resolve(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    config.parent().unwrap_or(Path::new(".")).join(p)
}

fn num(v: f64) -> String {
    v.to_string()
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SimulationKind {
    #[default]
    Lattice,
    Tuberculosis,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    kind: SimulationKind,
    lattice: SimulationConfig,
    tuberculosis: TbSchemaConfig,
}

pub fn simulate(ctx: &mut RunContext, config: Option<&Path>) -> Result<()> {
    let mut cfg: SimulateConfig = load_or_default(config)?;
    if let Some(p) = config {
        ctx.input(p);
    }
    let (sim, truth) = match cfg.kind {
        SimulationKind::Lattice => {
            ctx.seed("simulation", &mut cfg.lattice.seed);
            ctx.begin("simulate", &cfg)?;
            simulate_dataset(&cfg.lattice)?
        }
        SimulationKind::Tuberculosis => {
            ctx.seed("simulation", &mut cfg.tuberculosis.seed);
            ctx.begin("simulate", &cfg)?;
            simulate_tb_schema(&cfg.tuberculosis)?
        }
    };
    let data = ctx.path("data.csv");
    match cfg.kind {
        SimulationKind::Lattice => write_observations(&data, &sim.table)?,
        SimulationKind::Tuberculosis => write_tb_observations(&data, &sim.table)?,
    }
    ctx.wrote(data);
    let adj = ctx.path("adjacency.txt");
    write_adjacency(&adj, &sim.graph, &sim.table.region_ids)?;
    ctx.wrote(adj);
    ctx.json("truth.json", &truth)?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    data: PathBuf,
    adjacency: PathBuf,
    #[serde(default)]
    schema: DataSchema,
    #[serde(default)]
    model: ModelSpec,
    #[serde(default)]
    chains: ChainConfig,
}

/// What `predict` and `check` need to rebuild a fit's dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FitRecord {
    data: PathBuf,
    adjacency: PathBuf,
    schema: DataSchema,
    model: ModelSpec,
    data_hash: String,
}

const FIT_RECORD: &str = "fit.json";

fn load_dataset(
    ctx: &mut RunContext,
    data: &Path,
    adjacency: &Path,
    schema: &DataSchema,
    model: &ModelSpec,
) -> Result<(CountDataset, Design, Vec<String>)> {
    ctx.input(data);
    ctx.input(adjacency);
    let ing = ingest_dataset(data, adjacency, schema)?;
    let (data, design) = prepare(&ing.table, &ing.graph, model)?;
    Ok((data, design, ing.table.region_ids))
}

pub fn fit(ctx: &mut RunContext, config: &Path) -> Result<()> {
    let mut cfg: FitConfig = load(config)?;
    ctx.input(config);
    cfg.data = resolve(config, &cfg.data);
    cfg.adjacency = resolve(config, &cfg.adjacency);
    ctx.seed("chains", &mut cfg.chains.seed);
    ctx.begin("fit", &cfg)?;
    cfg.model.validate()?;
    cfg.chains.validate()?;
    let (data, design, _) = load_dataset(ctx, &cfg.data, &cfg.adjacency, &cfg.schema, &cfg.model)?;
    let samples = run_chains(&data, &cfg.model, &cfg.chains)?;
    for p in write_samples(&ctx.path("samples"), &samples)? {
        ctx.wrote(p);
    }
    ctx.records("summary.csv", &summarize(&samples))?;
    ctx.json("design.json", &design)?;
    ctx.json(
        FIT_RECORD,
        &FitRecord {
            data: cfg.data.clone(),
            adjacency: cfg.adjacency.clone(),
            schema: cfg.schema.clone(),
            model: cfg.model.clone(),
            data_hash: dataset_digest(&data),
        },
    )?;
    Ok(())
}

struct LoadedFit {
    record: FitRecord,
    data: CountDataset,
    design: Design,
    region_ids: Vec<String>,
    samples: pogit::mcmc::PosteriorSamples,
}

fn load_fit(ctx: &mut RunContext, fit_dir: &Path) -> Result<LoadedFit> {
    let record_path = fit_dir.join(FIT_RECORD);
    let record: FitRecord = read_json(&record_path).with_context(|| format!("reading {}", record_path.display()))?;
    ctx.input(&record_path);
    let (data, design, region_ids) = load_dataset(ctx, &record.data, &record.adjacency, &record.schema, &record.model)?;
    if dataset_digest(&data) != record.data_hash {
        return Err(pogit::Error::Data(format!(
            "input data changed since the fit in {} (digest mismatch)",
            fit_dir.display()
        ))
        .into());
    }
    let samples = read_samples(&fit_dir.join("samples"))?;
    Ok(LoadedFit {
        record,
        data,
        design,
        region_ids,
        samples,
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EffectCurveRequest {
    covariate: String,
    submodel: Submodel,
    #[serde(default = "default_scale")]
    scale: EffectScale,
    #[serde(default = "default_points")]
    n_points: usize,
    #[serde(default = "default_level")]
    level: f64,
    #[serde(default)]
    guard: f64,
}

fn default_scale() -> EffectScale {
    EffectScale::Linear
}

fn default_points() -> usize {
    50
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictConfig {
    fit_dir: PathBuf,
    #[serde(default)]
    prediction: PredictionConfig,
    #[serde(default)]
    effect_curves: Vec<EffectCurveRequest>,
}

#[derive(Serialize)]
struct PredictionSummary {
    n_draws: usize,
    replicate_coverage: f64,
}

pub fn predict(ctx: &mut RunContext, config: &Path) -> Result<()> {
    let mut cfg: PredictConfig = load(config)?;
    ctx.input(config);
    cfg.fit_dir = resolve(config, &cfg.fit_dir);
    ctx.seed("prediction", &mut cfg.prediction.seed);
    ctx.begin("predict", &cfg)?;
    let fit = load_fit(ctx, &cfg.fit_dir)?;
    let (result, y) = predict_counts(&fit.samples, &fit.data, &fit.record.model, &cfg.prediction)?;

    let q = |prefix: &str, ps: &[f64]| ps.iter().map(|p| format!("{prefix}_q{p}")).collect::<Vec<_>>();
    let mut header: Vec<String> = ["region", "time", "z", "y_mean"].map(String::from).to_vec();
    header.extend(q("y", &cfg.prediction.quantiles));
    header.extend(
        ["pi_mean", "pi_lower", "pi_upper", "replicate_lower", "replicate_upper"].map(String::from),
    );
    let rows: Vec<Vec<String>> = result
        .observations
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let u = &fit.data.units[i];
            let mut r = vec![
                fit.region_ids[u.region].clone(),
                u.time.to_string(),
                o.z.to_string(),
                num(o.y_mean),
            ];
            r.extend(o.y_quantiles.iter().map(|&v| num(v)));
            r.extend([o.pi_mean, o.pi_lower, o.pi_upper, o.replicate_lower, o.replicate_upper].map(num));
            r
        })
        .collect();
    ctx.table("predictions.csv", &header, &rows)?;

    let mut header: Vec<String> = ["time", "observed"].map(String::from).to_vec();
    header.extend(q("unreported", &cfg.prediction.total_quantiles));
    header.extend(q("total", &cfg.prediction.total_quantiles));
    let rows: Vec<Vec<String>> = result
        .totals
        .iter()
        .map(|t| {
            let mut r = vec![t.time.to_string(), t.observed.to_string()];
            r.extend(t.unreported.iter().chain(&t.total).map(|&v| num(v)));
            r
        })
        .collect();
    ctx.table("totals.csv", &header, &rows)?;

    let mut curve_files = std::collections::BTreeSet::new();
    for req in &cfg.effect_curves {
        let (term, tag) = match req.submodel {
            Submodel::Process => (fit.design.process_term(&req.covariate), "process"),
            Submodel::Reporting => (fit.design.reporting_term(&req.covariate), "reporting"),
        };
        let term = term.ok_or_else(|| {
            UsageError(format!("effect_curves: '{}' is not a {tag} term of the fitted model", req.covariate))
        })?;
        if req.n_points < 2 {
            bail!(UsageError("effect_curves.n_points must be at least 2".into()));
        }
        let scale = match req.scale {
            EffectScale::Linear => "linear",
            EffectScale::Probability => "probability",
        };
        let file = format!("effect_{tag}_{}_{scale}.csv", req.covariate);
        if !curve_files.insert(file.clone()) {
            bail!(UsageError(format!("effect_curves: more than one request writes {file}")));
        }
        let (lo, hi) = term.basis.training_range();
        let grid: Vec<f64> = (0..req.n_points)
            .map(|k| if k + 1 == req.n_points { hi } else { lo + (hi - lo) * k as f64 / (req.n_points - 1) as f64 })
            .collect();
        let curve = effect_curve(&fit.samples, term, req.submodel, &grid, req.scale, req.level, req.guard)?;
        let header = ["x", "mean", "lower", "upper", "extrapolated"].map(String::from);
        let rows: Vec<Vec<String>> = (0..grid.len())
            .map(|k| {
                vec![
                    num(curve.x[k]),
                    num(curve.mean[k]),
                    num(curve.lower[k]),
                    num(curve.upper[k]),
                    curve.extrapolated[k].to_string(),
                ]
            })
            .collect();
        ctx.table(&file, &header, &rows)?;
    }
    ctx.json(
        "prediction_summary.json",
        &PredictionSummary {
            n_draws: y.n_draws(),
            replicate_coverage: result.replicate_coverage,
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum CheckMode {
    #[default]
    Posterior,
    Prior,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CheckConfig {
    mode: CheckMode,
    /// Source of data, model and (posterior mode) samples.
    fit_dir: Option<PathBuf>,
    /// Prior mode without a fit: data, adjacency, schema and model inline.
    data: Option<PathBuf>,
    adjacency: Option<PathBuf>,
    schema: DataSchema,
    model: ModelSpec,
    /// Prior predictive draws.
    n_draws: usize,
    seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            mode: CheckMode::Posterior,
            fit_dir: None,
            data: None,
            adjacency: None,
            schema: DataSchema::default(),
            model: ModelSpec::default(),
            n_draws: 1000,
            seed: 1,
        }
    }
}

#[derive(Serialize)]
struct StatSummary {
    stat: &'static str,
    observed: f64,
    mean: f64,
    q025: f64,
    q975: f64,
    /// Fraction of replicates at or above the observed value.
    tail_probability: f64,
}

pub fn check(ctx: &mut RunContext, config: &Path) -> Result<()> {
    let mut cfg: CheckConfig = load(config)?;
    ctx.input(config);
    cfg.fit_dir = cfg.fit_dir.map(|p| resolve(config, &p));
    cfg.data = cfg.data.map(|p| resolve(config, &p));
    cfg.adjacency = cfg.adjacency.map(|p| resolve(config, &p));
    ctx.seed("check", &mut cfg.seed);
    ctx.begin("check", &cfg)?;

    let (replicates, observed): (CountDraws, Vec<u64>) = match (cfg.mode, &cfg.fit_dir) {
        (CheckMode::Posterior, Some(dir)) => {
            let fit = load_fit(ctx, dir)?;
            let rep = replicate_observed(&fit.samples, &fit.data, &fit.record.model, cfg.seed)?;
            (rep, fit.data.z.clone())
        }
        (CheckMode::Posterior, None) => bail!(UsageError("posterior check needs fit_dir".into())),
        (CheckMode::Prior, _) => {
            let (data, model) = match (&cfg.fit_dir, &cfg.data, &cfg.adjacency) {
                (Some(dir), _, _) => {
                    let record: FitRecord = read_json(&dir.join(FIT_RECORD))?;
                    ctx.input(&dir.join(FIT_RECORD));
                    let (d, _, _) = load_dataset(ctx, &record.data, &record.adjacency, &record.schema, &record.model)?;
                    (d, record.model)
                }
                (None, Some(data), Some(adj)) => {
                    let (d, _, _) = load_dataset(ctx, data, adj, &cfg.schema, &cfg.model)?;
                    (d, cfg.model.clone())
                }
                _ => bail!(UsageError("prior check needs fit_dir, or data and adjacency".into())),
            };
            if cfg.n_draws == 0 {
                bail!(UsageError("n_draws must be positive".into()));
            }
            (prior_predictive_draws(&model, &data, cfg.n_draws, cfg.seed)?, data.z.clone())
        }
    };

    let stats: Vec<Vec<f64>> = PredictiveStat::ALL
        .iter()
        .map(|&s| predictive_stat(&replicates, &observed, s))
        .collect::<pogit::Result<_>>()?;
    let mut header = vec!["draw".to_string()];
    header.extend(PredictiveStat::ALL.iter().map(|s| s.name().to_string()));
    let rows: Vec<Vec<String>> = (0..replicates.n_draws())
        .map(|d| {
            let mut r = vec![d.to_string()];
            r.extend(stats.iter().map(|s| num(s[d])));
            r
        })
        .collect();
    ctx.table("check_draws.csv", &header, &rows)?;

    let summary: Vec<StatSummary> = PredictiveStat::ALL
        .iter()
        .zip(&stats)
        .map(|(&s, v)| {
            let obs = observed_stat(&observed, s);
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            StatSummary {
                stat: s.name(),
                observed: obs,
                mean: v.iter().sum::<f64>() / v.len() as f64,
                q025: pogit::mcmc::diagnostics::quantile_sorted(&sorted, 0.025),
                q975: pogit::mcmc::diagnostics::quantile_sorted(&sorted, 0.975),
                tail_probability: v.iter().filter(|&&x| x >= obs).count() as f64 / v.len() as f64,
            }
        })
        .collect();
    ctx.records("check_summary.csv", &summary)?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ElicitConfig {
    estimates: Vec<RateEstimate>,
    n_sims: usize,
    seed: u64,
    scale: AveragingScale,
}

impl Default for ElicitConfig {
    fn default() -> Self {
        Self {
            // Yearly WHO case-detection estimates for Brazil.
            estimates: vec![
                RateEstimate { point: 0.91, low: 0.78, high: 1.0 },
                RateEstimate { point: 0.84, low: 0.73, high: 0.99 },
                RateEstimate { point: 0.87, low: 0.75, high: 1.0 },
            ],
            n_sims: 100_000,
            seed: 1,
            scale: AveragingScale::Logit,
        }
    }
}

#[derive(Serialize)]
struct ComponentRow {
    point: f64,
    low: f64,
    high: f64,
    logit_mean: f64,
    logit_sd: f64,
    fitted_low: f64,
    fitted_high: f64,
}

#[derive(Serialize)]
struct ElicitOutput {
    beta0_mean: f64,
    beta0_sd: f64,
    scale: AveragingScale,
    n_sims: usize,
}

pub fn elicit(ctx: &mut RunContext, config: Option<&Path>) -> Result<()> {
    let mut cfg: ElicitConfig = load_or_default(config)?;
    if let Some(p) = config {
        ctx.input(p);
    }
    ctx.seed("elicitation", &mut cfg.seed);
    ctx.begin("elicit", &cfg)?;
    let rows: Vec<ComponentRow> = cfg
        .estimates
        .iter()
        .map(|&e| {
            approximate_rate_distribution(e).map(|a| ComponentRow {
                point: e.point,
                low: e.low,
                high: e.high,
                logit_mean: a.mean,
                logit_sd: a.sd,
                fitted_low: a.fitted_low,
                fitted_high: a.fitted_high,
            })
        })
        .collect::<pogit::Result<_>>()?;
    ctx.records("components.csv", &rows)?;
    let prior = elicit_beta0_prior(&cfg.estimates, cfg.n_sims, cfg.seed, cfg.scale)?;
    ctx.json(
        "elicitation.json",
        &ElicitOutput {
            beta0_mean: prior.mean,
            beta0_sd: prior.sd,
            scale: cfg.scale,
            n_sims: cfg.n_sims,
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------

fn failures<'a>(statuses: impl Iterator<Item = &'a String>) -> Result<()> {
    let n = statuses.filter(|s| *s != "ok").count();
    if n > 0 {
        bail!(CellFailures(n));
    }
    Ok(())
}

fn experiment_begin<T: Serialize + DeserializeOwned + Default>(
    ctx: &mut RunContext,
    name: &str,
    config: Option<&Path>,
    seeds: impl FnOnce(&mut RunContext, &mut T),
) -> Result<T> {
    let mut cfg: T = load_or_default(config)?;
    if let Some(p) = config {
        ctx.input(p);
    }
    seeds(ctx, &mut cfg);
    ctx.begin(&format!("experiment {name}"), &cfg)?;
    Ok(cfg)
}

pub fn prior_sensitivity(ctx: &mut RunContext, config: Option<&Path>) -> Result<()> {
    let cfg = experiment_begin::<PriorSensitivityConfig>(ctx, "prior-sensitivity", config, |ctx: &mut RunContext, c: &mut _| {
        ctx.seed("simulation", &mut c.simulation.seed);
        ctx.seed("cells", &mut c.seed);
    })?;
    let res = experiment_prior_sensitivity(&cfg)?;
    ctx.records("coverage.csv", &res.cells)?;
    // Matrix form: one row per prior sd, one column per prior mean.
    let mut header = vec!["prior_sd".to_string()];
    header.extend(cfg.prior_means.iter().map(|m| format!("mean_{m}")));
    let rows: Vec<Vec<String>> = cfg
        .prior_sds
        .iter()
        .map(|&sd| {
            let mut r = vec![num(sd)];
            r.extend(cfg.prior_means.iter().map(|&m| {
                res.cell(m, sd).and_then(|c| c.coverage).map(num).unwrap_or_default()
            }));
            r
        })
        .collect();
    ctx.table("coverage_matrix.csv", &header, &rows)?;
    ctx.json("result.json", &res)?;
    failures(res.cells.iter().map(|c| &c.status))
}

pub fn information_tradeoff(ctx: &mut RunContext, config: Option<&Path>) -> Result<()> {
    let cfg = experiment_begin::<InformationTradeoffConfig>(ctx, "information-tradeoff", config, |ctx: &mut RunContext, c: &mut _| {
        ctx.seed("simulation", &mut c.simulation.seed);
        ctx.seed("cells", &mut c.seed);
    })?;
    let res = experiment_information_tradeoff(&cfg)?;
    ctx.records("log_mse.csv", &res.cells)?;
    ctx.json("result.json", &res)?;
    failures(res.cells.iter().map(|c| &c.status))
}

pub fn covariate_strength(ctx: &mut RunContext, config: Option<&Path>) -> Result<()> {
    let cfg = experiment_begin::<CovariateStrengthConfig>(ctx, "covariate-strength", config, |ctx: &mut RunContext, c: &mut _| {
        ctx.seed("simulation", &mut c.simulation.seed);
        ctx.seed("cells", &mut c.seed);
    })?;
    let res = experiment_covariate_strength(&cfg)?;
    ctx.records("cells.csv", &res.cells)?;
    ctx.records("ladder.csv", &res.summary)?;
    ctx.json("result.json", &res)?;
    failures(res.cells.iter().map(|c| &c.status))
}

#[derive(Serialize)]
struct ClassificationRow<'a> {
    variant: &'a str,
    rmse: Option<f64>,
    correlation: Option<f64>,
    data_hash: &'a str,
    status: &'a str,
}

pub fn covariate_classification(ctx: &mut RunContext, config: Option<&Path>) -> Result<()> {
    let cfg = experiment_begin::<ClassificationConfig>(ctx, "covariate-classification", config, |ctx: &mut RunContext, c: &mut _| {
        ctx.seed("simulation", &mut c.simulation.seed);
        ctx.seed("cells", &mut c.seed);
    })?;
    let res = experiment_covariate_classification(&cfg)?;
    let rows: Vec<ClassificationRow> = res
        .fits
        .iter()
        .map(|f| ClassificationRow {
            variant: f.variant.name(),
            rmse: f.rmse,
            correlation: f.correlation,
            data_hash: &f.data_hash,
            status: &f.status,
        })
        .collect();
    ctx.records("rmse.csv", &rows)?;
    let mut header = vec!["unit".to_string(), "true_y".to_string()];
    header.extend(res.fits.iter().map(|f| format!("median_{}", f.variant.name())));
    let rows: Vec<Vec<String>> = (0..res.true_y.len())
        .map(|i| {
            let mut r = vec![i.to_string(), res.true_y[i].to_string()];
            r.extend(res.fits.iter().map(|f| f.median_y.get(i).map(|&v| num(v)).unwrap_or_default()));
            r
        })
        .collect();
    ctx.table("medians.csv", &header, &rows)?;
    ctx.json("result.json", &res)?;
    failures(res.fits.iter().map(|f| &f.status))
}
