//! Command-line front end.
//!
//! Every subcommand reads one TOML [`RunConfig`], computes all of its outputs
//! in memory and only then writes them, together with `resolved_config.toml`,
//! to the output directory. A run that fails validation writes nothing.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | invalid config or arguments |
//! | 3 | file input/output |
//! | 4 | numerical failure (fit failure, too many failed replicates) |
//! | 5 | condition check failure (a unit with zero inclusion probability, or a FAIL verdict under `strict`) |
//!
//! `INFSAMP_WORKERS` sets the worker count of `experiment`; every other
//! command is single-threaded apart from Monte Carlo replication.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::designs::DesignError;
use crate::experiments::ExperimentError;
use crate::inclusion::InclusionError;
use crate::inference::FitError;
use crate::synthpop::PopulationError;

pub use commands::{execute, Artifacts, Outcome};
pub use config::{
    BlockLabels, DiagnoseSection, FitSection, FitWeights, InclusionMethod, InclusionSection, PairSet,
    PopulationSection, RunConfig, SampleSection,
};

/// Environment variable holding the experiment worker count.
pub const WORKERS_ENV: &str = "INFSAMP_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("condition check failed: {0}")]
    Condition(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Condition(_) => 5,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<PopulationError> for CliError {
    fn from(e: PopulationError) -> Self {
        match e {
            PopulationError::InvalidConfig(_) => CliError::Config(e.to_string()),
            PopulationError::Csv(_) | PopulationError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::Csv(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<InclusionError> for CliError {
    fn from(e: InclusionError) -> Self {
        match e {
            InclusionError::Design(d) => d.into(),
            InclusionError::ZeroInclusion { .. } => CliError::Condition(format!("design defect: {e}")),
            InclusionError::Io(_) => CliError::Io(e.to_string()),
            InclusionError::NotEnumerable(_) | InclusionError::Invalid(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        let trace = match &e {
            FitError::Separation { trace, .. } | FitError::NotConverged { trace, .. } => trace.as_slice(),
            FitError::Io(_) => return CliError::Io(e.to_string()),
            _ => &[],
        };
        let mut msg = e.to_string();
        for t in trace {
            msg.push_str(&format!(
                "\n  iteration {}: log-likelihood {}, gradient norm {:e}, step {}",
                t.iteration, t.log_likelihood, t.grad_norm, t.step_scale
            ));
        }
        CliError::Numerical(msg)
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Population(p) => p.into(),
            ExperimentError::Design(d) => d.into(),
            ExperimentError::Io(_) => CliError::Io(e.to_string()),
            ExperimentError::Reference(_) | ExperimentError::TooManyFailures { .. } => CliError::Numerical(e.to_string()),
            ExperimentError::Config(_) | ExperimentError::Pool(_) => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "infsamp", version, about = "Survey-weighted inference under informative sampling designs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Population,
    Sample,
    Inclusion,
    Diagnose,
    Fit,
    Experiment,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or import) a population and write population.csv.
    Population(CommonArgs),
    /// Draw one sample and write sample.csv.
    Sample(CommonArgs),
    /// Compute first- and second-order inclusion probabilities.
    Inclusion(CommonArgs),
    /// Factorization deviations and condition reports.
    Diagnose(CommonArgs),
    /// Fit the weighted marginal model to one sample.
    Fit(FitArgs),
    /// Run a replicated convergence study.
    Experiment(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Suppresses the standard-output summary.
    #[arg(short, long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fit with unit weights instead of the sample's base weights.
    #[arg(long)]
    pub equal_weights: bool,
}

impl Command {
    fn split(&self) -> (CommandKind, &CommonArgs) {
        match self {
            Command::Population(a) => (CommandKind::Population, a),
            Command::Sample(a) => (CommandKind::Sample, a),
            Command::Inclusion(a) => (CommandKind::Inclusion, a),
            Command::Diagnose(a) => (CommandKind::Diagnose, a),
            Command::Fit(a) => (CommandKind::Fit, &a.common),
            Command::Experiment(a) => (CommandKind::Experiment, a),
        }
    }
}

/// Loads the config, applies flag overrides, runs the command and writes its
/// outputs. Returns the output directory.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let (kind, args) = cli.command.split();
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if args.quiet {
        cfg.verbosity = 0;
    }
    if let Command::Fit(FitArgs { equal_weights: true, .. }) = &cli.command {
        cfg.fit.get_or_insert_with(FitSection::default).weights = FitWeights::Equal;
    }

    let outcome = execute(kind, &cfg)?;
    outcome.artifacts.commit(&cfg.out_dir)?;
    if cfg.verbosity > 0 && !outcome.summary.is_empty() {
        print!("{}", outcome.summary);
    }
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(cfg.out_dir),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("infsamp: {e}");
            e.exit_code()
        }
    }
}
