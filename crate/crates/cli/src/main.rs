//! `nnqr` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "NNQR_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<nnqr::Error> for CliError {
    fn from(e: nnqr::Error) -> Self {
        match e {
            nnqr::Error::InvalidQuantile(_) | nnqr::Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "nnqr", version, about = "Nuclear-norm penalized quantile regression for panels")]
struct Cli {
    /// Flat key = value file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the penalized estimator to a panel CSV.
    Fit(FitArgs),
    /// Fit and estimate the number of factors.
    Rank(RankArgs),
    /// Monte Carlo benchmark of the estimators.
    Bench(BenchArgs),
    /// Write a simulated panel and its ground truth.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub u: Option<f64>,
    /// Singular-value cutoff; defaults to (N T max(N, T))^(1/4).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated list, e.g. 0.1,0.2.
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub u: Option<String>,
    /// Comma-separated NxT tokens, e.g. 100x100,200x200.
    #[arg(long)]
    pub sizes: Option<String>,
    /// normal, t2 or both comma-separated.
    #[arg(long)]
    pub errors: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Subset of nu,it,po.
    #[arg(long)]
    pub estimators: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of factors for the iterative estimator.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Give the iterative estimator the true number of factors.
    #[arg(long = "true-rank-from-truth")]
    pub true_rank_from_truth: bool,
    /// Penalty override for the nuclear-norm estimator.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Report a pooled MSE_q computed with L = 0.
    #[arg(long = "po-mse-q")]
    pub po_mse_q: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// NxT, e.g. 200x200.
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub errors: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Quantile levels at which to write the truth.
    #[arg(long)]
    pub u: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(CliError::Usage(format!("{THREADS_ENV} must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = match &cli.config {
        Some(p) => config::ConfigFile::load(p)?,
        None => config::ConfigFile::default(),
    };
    match cli.command {
        Command::Fit(a) => commands::fit(a, &cfg),
        Command::Rank(a) => commands::rank(a, &cfg),
        Command::Bench(a) => commands::bench(a, &cfg),
        Command::Simulate(a) => commands::simulate(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
