use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

mod commands;

use commands::{Outcome, RunContext};

#[derive(Debug, Parser)]
#[command(name = "pogit", version, about = "Under-reported count models: simulate, fit, predict, check")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory receiving all outputs and the run manifest.
    #[arg(long, global = true, env = "POGIT_OUT_DIR", default_value = "pogit-out")]
    out_dir: PathBuf,

    /// Worker threads for chains and experiment cells (default: all cores).
    #[arg(long, global = true, env = "POGIT_THREADS")]
    threads: Option<usize>,

    /// Increase log verbosity (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a lattice or tuberculosis-schema dataset.
    Simulate { config: Option<PathBuf> },
    /// Fit a model by MCMC and write posterior samples.
    Fit { config: PathBuf },
    /// Predict true counts, totals and effect curves from a fit.
    Predict { config: PathBuf },
    /// Prior or posterior predictive checks.
    Check { config: PathBuf },
    /// Run one of the simulation studies.
    Experiment {
        #[command(subcommand)]
        which: ExperimentKind,
    },
    /// Build a prior for the mean reporting rate from external estimates.
    Elicit { config: Option<PathBuf> },
}

#[derive(Debug, Subcommand)]
enum ExperimentKind {
    PriorSensitivity { config: Option<PathBuf> },
    InformationTradeoff { config: Option<PathBuf> },
    CovariateStrength { config: Option<PathBuf> },
    CovariateClassification { config: Option<PathBuf> },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }

    let start = Instant::now();
    let name = match &cli.command {
        Command::Simulate { .. } => "simulate",
        Command::Fit { .. } => "fit",
        Command::Predict { .. } => "predict",
        Command::Check { .. } => "check",
        Command::Elicit { .. } => "elicit",
        Command::Experiment { which } => match which {
            ExperimentKind::PriorSensitivity { .. } => "experiment prior-sensitivity",
            ExperimentKind::InformationTradeoff { .. } => "experiment information-tradeoff",
            ExperimentKind::CovariateStrength { .. } => "experiment covariate-strength",
            ExperimentKind::CovariateClassification { .. } => "experiment covariate-classification",
        },
    };
    let mut ctx = RunContext::new(name, cli.out_dir.clone(), cli.seed);
    let result = match &cli.command {
        Command::Simulate { config } => commands::simulate(&mut ctx, config.as_deref()),
        Command::Fit { config } => commands::fit(&mut ctx, config),
        Command::Predict { config } => commands::predict(&mut ctx, config),
        Command::Check { config } => commands::check(&mut ctx, config),
        Command::Elicit { config } => commands::elicit(&mut ctx, config.as_deref()),
        Command::Experiment { which } => match which {
            ExperimentKind::PriorSensitivity { config } => commands::prior_sensitivity(&mut ctx, config.as_deref()),
            ExperimentKind::InformationTradeoff { config } => {
                commands::information_tradeoff(&mut ctx, config.as_deref())
            }
            ExperimentKind::CovariateStrength { config } => commands::covariate_strength(&mut ctx, config.as_deref()),
            ExperimentKind::CovariateClassification { config } => {
                commands::covariate_classification(&mut ctx, config.as_deref())
            }
        },
    };
    let code = match &result {
        Ok(()) => Outcome::Success,
        Err(e) => {
            eprintln!("error: {e:#}");
            commands::classify(e)
        }
    };
    if let Err(e) = ctx.write_manifest(start.elapsed().as_secs_f64(), &result) {
        eprintln!("error: could not write manifest: {e:#}");
        return ExitCode::from(Outcome::Data as u8);
    }
    ExitCode::from(code as u8)
}
