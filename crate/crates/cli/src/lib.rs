//! Batch driver for bounded regression: solve, rebalance, backtest, verify
//! and synthetic data generation.
//!
//! Exit codes: 0 on success, 1 for bad input, 2 when the solver fails to
//! converge or the instance is infeasible (and when `verify` finds a discrepancy).

use std::path::{Path, PathBuf};

use boundreg_core::Error as CoreError;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod inputs;

pub use inputs::LoadingsSpec;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: CoreError },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn core(&self) -> Option<&CoreError> {
        match self {
            Self::Core(e) | Self::File { source: e, .. } => Some(e),
            _ => None,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Verification(_) => 2,
            _ if self.core().is_some_and(CoreError::is_solver_failure) => 2,
            _ => 1,
        }
    }

    /// Solver state worth printing after a non-convergence.
    pub fn diagnostic(&self) -> Option<String> {
        match self.core()? {
            CoreError::InnerNonConvergence { state } => Some(format!(
                "J+ = {:?}\nJ- = {:?}\nw_hat = {:?}",
                state.j_plus,
                state.j_minus,
                state.w_hat.as_slice()
            )),
            CoreError::NormalizationInfeasible { iterations, gamma, l1 } => {
                Some(format!("gamma = {gamma}\nsum |w| = {l1}\nouter iterations = {iterations}"))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "boundreg", version, about = "Bounded weighted cross-sectional regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factor-neutral, L1-normalized weights under per-element bounds.
    Solve(SolveArgs),
    /// Weights reached by trading from existing holdings under trade bounds.
    Rebalance(RebalanceArgs),
    /// Intraday mean-reversion backtest over a price data directory.
    Backtest(BacktestArgs),
    /// Compare the solver with the brute-force oracle on random instances.
    Verify(VerifyArgs),
    /// Write a seeded synthetic data directory for `backtest`.
    GenSynthetic(GenSyntheticArgs),
}

/// Inputs shared by `solve` and `rebalance`.
#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// `id,alpha` file; its row order fixes the instrument order.
    #[arg(long)]
    pub alpha: PathBuf,
    /// intercept | classification=<f> | classification+styles=<f>,<f> | pca=<cov-or-panel>[,<eigen_tol>]
    #[arg(long, default_value = "intercept")]
    pub loadings: LoadingsSpec,
    /// `id,z` regression weights.
    #[arg(long, conflicts_with = "cov")]
    pub z: Option<PathBuf>,
    /// Covariance matrix or panel file; z is the inverse of its diagonal.
    #[arg(long)]
    pub cov: Option<PathBuf>,
    /// TOML configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV; stdout when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// `id,lower,upper` weight bounds; ±1 (no constraint) when omitted.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RebalanceArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// `id,holding` prior dollar holdings; must be factor neutral.
    #[arg(long)]
    pub prior: PathBuf,
    /// `id,lower,upper` trade bounds in dollars.
    #[arg(long, conflicts_with = "addv", required_unless_present = "addv")]
    pub trade_bounds: Option<PathBuf>,
    /// `id,addv` average daily dollar volumes; trade bounds follow from xi, xi_tilde, xi_prime.
    #[arg(long)]
    pub addv: Option<PathBuf>,
    /// `id,lower_override,upper_override` dollar overrides of the trade bounds.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    /// Total investment I; overrides the config.
    #[arg(long)]
    pub investment_level: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory with open.csv, close_adj.csv, volume.csv and, as needed,
    /// classification.csv and styles.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for report.csv, cumpnl.csv and weights.csv.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 8)]
    pub max_n: usize,
    #[arg(long, default_value_t = 3)]
    pub max_k: usize,
    /// Overrides the bound-membership tolerance.
    #[arg(long)]
    pub solver_tol: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub instruments: usize,
    #[arg(long, default_value_t = 100)]
    pub days: usize,
    #[arg(long, default_value_t = 0.01)]
    pub gap_vol: f64,
    /// Fraction of the overnight gap undone intraday.
    #[arg(long, default_value_t = 0.5)]
    pub reversion: f64,
    #[arg(long, default_value_t = 0.01)]
    pub intraday_vol: f64,
    #[arg(long, default_value_t = 2)]
    pub categories: usize,
    #[arg(long, default_value_t = 1)]
    pub styles: usize,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Rebalance(a) => commands::rebalance(a),
        Command::Backtest(a) => commands::backtest(a),
        Command::Verify(a) => commands::verify(a),
        Command::GenSynthetic(a) => commands::gen_synthetic(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Core(CoreError::ZeroResiduals).exit_code(), 2);
        let infeasible = CoreError::NormalizationInfeasible {
            iterations: 1,
            gamma: 1.0,
            l1: 0.8,
        };
        assert_eq!(CliError::Core(infeasible).exit_code(), 2);
        assert_eq!(CliError::Core(CoreError::UnknownId("a".into())).exit_code(), 1);
        assert_eq!(CliError::Verification("x".into()).exit_code(), 2);
    }
}
