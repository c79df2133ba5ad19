//! Command-line front end: argument parsing, dispatch and exit codes.
//!
//! Exit codes: 0 success, 2 input error (bad config, schema or data),
//! 3 numerical failure or unstable scenario.

pub mod commands;
pub mod config;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::covariance::{CovEstimator, ErrorStructure};
use crate::error::Error;
use config::{AnalysisConfig, ReferenceSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) | Error::InsufficientReplicates(_) | Error::Io(_) | Error::Parse(_) => EXIT_INPUT,
        Error::SingularSystem(_)
        | Error::DegenerateResidual { .. }
        | Error::NotConverged { .. }
        | Error::ScenarioUnstable { .. } => EXIT_NUMERIC,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hdcal",
    version,
    about = "Debiased calibration for log-contrast regression with mismeasured compositions"
)]
pub struct Cli {
    /// Worker threads for Monte Carlo replicates (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation scenario and summarize every method.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n_mc: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one simulated data set in the `analyze` input layout.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Replicate index within the scenario.
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the calibrated and uncalibrated debiased estimators to data.
    Analyze {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        response: PathBuf,
        /// JSON bundle from `estimate-nuisance` to use instead of estimating.
        #[arg(long)]
        nuisance_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the measurement-error and latent nuisances.
    EstimateNuisance {
        #[command(flatten)]
        inputs: InputArgs,
        /// Accepted for symmetry with `analyze`; unused.
        #[arg(long)]
        response: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub counts: PathBuf,
    /// Comma-separated replicate count files (at least 2).
    #[arg(long, value_delimiter = ',')]
    pub replicates: Vec<PathBuf>,
    /// Reference component: a column name, or a 1-based index (default: last).
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long, value_parser = parse_cov, default_value = "shrinkage")]
    pub cov: CovEstimator,
    #[arg(long, value_parser = parse_structure, default_value = "shared_reference")]
    pub error_structure: ErrorStructure,
    /// Replacement for zero counts.
    #[arg(long, default_value_t = 0.1)]
    pub impute: f64,
    /// Comma-separated components used to estimate the error variance.
    #[arg(long, value_delimiter = ',')]
    pub sigma_u_columns: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 10)]
    pub cv_folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_cov(s: &str) -> Result<CovEstimator, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_structure(s: &str) -> Result<ErrorStructure, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl InputArgs {
    fn into_config(self, response: Option<PathBuf>, nuisance: Option<PathBuf>) -> AnalysisConfig {
        let mut cfg = AnalysisConfig::new(self.counts, self.replicates);
        cfg.response_path = response;
        cfg.reference_component = self.reference.as_deref().map(ReferenceSpec::parse);
        cfg.zero_impute_value = self.impute;
        cfg.cov_estimator = self.cov;
        cfg.error_structure = self.error_structure;
        cfg.sigma_u_columns = self.sigma_u_columns;
        cfg.level = self.level;
        cfg.cv_folds = self.cv_folds;
        cfg.seed = self.seed;
        cfg.nuisance_path = nuisance;
        cfg
    }
}

fn dispatch(command: Command) -> crate::Result<()> {
    match command {
        Command::Simulate {
            config,
            n_mc,
            seed,
            out,
        } => {
            let text = commands::simulate(&config, n_mc, seed, &out)?;
            print!("{text}");
        }
        Command::Generate {
            config,
            seed,
            replicate,
            out,
        } => commands::generate(&config, seed, replicate, &out)?,
        Command::Analyze {
            inputs,
            response,
            nuisance_file,
            out,
        } => {
            let record = commands::analyze(&inputs.into_config(Some(response), nuisance_file), &out)?;
            let flagged = record.rows.iter().filter(|r| r.significant).count();
            println!(
                "{} coefficient rows written to {} ({flagged} with p < {})",
                record.rows.len(),
                out.display(),
                commands::FLAG_P
            );
        }
        Command::EstimateNuisance { inputs, response, out } => {
            let bundle = commands::estimate_nuisance(&inputs.into_config(response, None), &out)?;
            println!("sigma_u_sq = {}", bundle.sigma_u_sq);
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::invalid(format!("threads: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
