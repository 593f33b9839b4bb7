//! Flat TOML configuration shared by every subcommand.
//!
//! ```toml
//! tol = 1e-6
//! max_outer = 100
//! bound_mode = "addv_fraction"
//! addv_fraction = 0.01
//! ```

use std::path::Path;

use boundreg_core::backtest::{BacktestConfig, BoundMode, LoadingsIncarnation};
use boundreg_core::bounded::SolverConfig;
use boundreg_core::portfolio::PositionLimits;
use serde::Deserialize;

use crate::CliError;

const DEFAULT_ADDV_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub tol: Option<f64>,
    pub prec: Option<f64>,
    pub max_inner: Option<usize>,
    pub max_outer: Option<usize>,

    pub universe_size: Option<usize>,
    pub window: Option<usize>,
    pub refresh_period: Option<usize>,
    pub investment_level: Option<f64>,
    /// `none` or `addv_fraction`.
    pub bound_mode: Option<String>,
    pub addv_fraction: Option<f64>,
    /// `intercept`, `classification` or `classification+styles`.
    pub loadings: Option<String>,
    pub keep_weights: Option<bool>,

    pub xi: Option<f64>,
    pub xi_tilde: Option<f64>,
    pub xi_prime: Option<f64>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("bad config: {e}")))
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn solver(&self) -> Result<SolverConfig, CliError> {
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            tol: self.tol.unwrap_or(d.tol),
            prec: self.prec.unwrap_or(d.prec),
            max_inner: self.max_inner.or(d.max_inner),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn backtest(&self) -> Result<BacktestConfig, CliError> {
        let d = BacktestConfig::default();
        let bound_mode = match self.bound_mode.as_deref() {
            None | Some("none") => {
                if self.addv_fraction.is_some() {
                    return Err(CliError::Usage("addv_fraction is set but bound_mode is not `addv_fraction`".into()));
                }
                BoundMode::None
            }
            Some("addv_fraction") => BoundMode::AddvFraction(self.addv_fraction.unwrap_or(DEFAULT_ADDV_FRACTION)),
            Some(other) => return Err(CliError::Usage(format!("unknown bound_mode `{other}`"))),
        };
        let loadings = match self.loadings.as_deref() {
            None | Some("intercept") => LoadingsIncarnation::Intercept,
            Some("classification") => LoadingsIncarnation::Classification,
            Some("classification+styles") => LoadingsIncarnation::ClassificationPlusStyles,
            Some(other) => return Err(CliError::Usage(format!("unknown loadings `{other}`"))),
        };
        let cfg = BacktestConfig {
            universe_size: self.universe_size.unwrap_or(d.universe_size),
            window: self.window.unwrap_or(d.window),
            refresh_period: self.refresh_period.unwrap_or(d.refresh_period),
            investment_level: self.investment_level.unwrap_or(d.investment_level),
            bound_mode,
            xi: self.xi.unwrap_or(d.xi),
            loadings,
            solver: self.solver()?,
            keep_positions: self.keep_weights.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Position limits for rebalancing; unset caps default to 1 (inactive).
    pub fn limits(&self) -> Result<PositionLimits, CliError> {
        Ok(PositionLimits::new(
            self.xi.unwrap_or(1.0),
            self.xi_tilde.unwrap_or(1.0),
            self.xi_prime.unwrap_or(1.0),
        )?)
    }

    pub fn investment_level(&self) -> f64 {
        self.investment_level.unwrap_or(BacktestConfig::default().investment_level)
    }
}
