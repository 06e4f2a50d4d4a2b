//! The `gnum` command line: `gen`, `train`, `eval`, `sweep` and `report`.
//!
//! Every command writes its artifacts plus a `manifest.json` into
//! `--out-dir`. Exit codes: 0 success, 2 configuration, usage or I/O
//! problems, 3 numerical failure, 4 integrity failure.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::graph::GraphError;
use crate::synth::SynthError;
use crate::train::TrainError;

pub use config::{Overrides, ENV_PREFIX};
pub use manifest::{FileHash, RunManifest, MANIFEST_FILE};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("integrity: {0}")]
    Integrity(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Integrity(_) => 4,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => CliError::Numerical(e.to_string()),
            TrainError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gnum", version, about = "Graph neural network uplift modeling")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Overrides the `seed` key of the resolved config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Sweep worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Record zero wall-clock times so reruns are byte-identical.
    #[arg(long, global = true)]
    pub reproducible: bool,
    /// Override one config key, e.g. `--set kappa2=2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Start from a named preset instead of spelling out every key.
    #[arg(long, global = true)]
    pub preset: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a semi-synthetic dataset.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit an estimator and save its checkpoint and history.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long)]
        backbone: Option<String>,
        /// Train, validation and test fractions.
        #[arg(long, default_value = "0.7,0.1,0.2")]
        split: String,
        /// Share of training nodes whose outcome is used.
        #[arg(long, default_value_t = 1.0)]
        label_fraction: f64,
    },
    /// Score a checkpoint on one split of a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// train, val, test, labeled or all.
        #[arg(long, default_value = "test")]
        split: String,
        /// Qini bins.
        #[arg(long, default_value_t = 100)]
        bins: usize,
        /// Average predicted rather than observed outcomes in the uplift curve.
        #[arg(long)]
        average_predictions: bool,
        /// Rank treated and control nodes together in the uplift curve.
        #[arg(long)]
        joint: bool,
    },
    /// Run a resumable grid of training jobs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the `kind` key (kappa or scarcity).
        #[arg(long)]
        kind: Option<String>,
    },
    /// Verify run directories and tabulate them side by side.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_env(args, std::env::vars().collect())
}

/// [`run`] with an explicit environment for `GNUM_<KEY>` overrides.
pub fn run_with_env<I, T>(args: I, env: Vec<(String, String)>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.global.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli, argv, env) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
