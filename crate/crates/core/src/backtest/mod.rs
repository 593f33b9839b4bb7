//! Intraday mean-reversion backtest.
//!
//! Each trading day `d` the expected returns are `E_i = -ln(open_d / close_{d-1})`.
//! Positions are established at the open from the (bounded) regression of `E`
//! on the day's loadings and liquidated at the close. The universe (top ADDV
//! names) and the regression weights `z_i = 1 / Var(E_i)` are refreshed at
//! the start of every period of `refresh_period` days from the `window` days
//! before it.

mod report;
pub mod synthetic;

use chrono::NaiveDate;
use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bounded::{bounded_regression, SolverConfig};
use crate::loadings::{augment_style_columns, classification_loadings, LoadingsMatrix};
use crate::panel::{compute_addv, select_universe, PricePanel, DEFAULT_WINDOW};
use crate::portfolio::{establishing_bounds, PositionLimits};
use crate::regression::{unbounded_weights, RegressionWeights};
use crate::{Error, Result};

pub use report::{annualized_roc, annualized_sharpe, cents_per_share, BacktestReport, DayPositions, DayRecord, DayStatus};

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundMode {
    /// Unbounded regression weights.
    None,
    /// `|H_i| <= fraction * ADDV_i` (and `|H_i| <= xi I`).
    AddvFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadingsIncarnation {
    Intercept,
    Classification,
    ClassificationPlusStyles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub universe_size: usize,
    pub window: usize,
    pub refresh_period: usize,
    /// Total dollar investment `I`, long plus short.
    pub investment_level: f64,
    pub bound_mode: BoundMode,
    /// Diversification cap as a fraction of `I`; 1 disables it.
    pub xi: f64,
    pub loadings: LoadingsIncarnation,
    pub solver: SolverConfig,
    /// Keep per-day members and holdings in the report.
    pub keep_positions: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            universe_size: 2000,
            window: DEFAULT_WINDOW,
            refresh_period: DEFAULT_WINDOW,
            investment_level: 2e7,
            bound_mode: BoundMode::None,
            xi: 1.0,
            loadings: LoadingsIncarnation::Intercept,
            solver: SolverConfig::default(),
            keep_positions: false,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.universe_size == 0 || self.refresh_period == 0 {
            return Err(Error::InvalidInput("universe size and refresh period must be positive".into()));
        }
        if self.window < 2 {
            return Err(Error::InvalidInput("the variance window needs at least 2 days".into()));
        }
        if !(self.investment_level > 0.0 && self.investment_level.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "investment level must be positive, got {}",
                self.investment_level
            )));
        }
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(Error::InvalidInput(format!("xi must lie in (0, 1], got {}", self.xi)));
        }
        if let BoundMode::AddvFraction(f) = self.bound_mode {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidInput(format!("ADDV fraction must lie in (0, 1], got {f}")));
            }
        }
        self.solver.validate()
    }
}

/// `E_i = -ln(open_i / close_prev_i)`.
pub fn mean_reversion_returns(open_today: &DVector<f64>, close_prev_adj: &DVector<f64>) -> Result<DVector<f64>> {
    if open_today.len() != close_prev_adj.len() {
        return Err(Error::DimensionMismatch {
            what: "previous close",
            expected: open_today.len(),
            actual: close_prev_adj.len(),
        });
    }
    if let Some(p) = open_today.iter().chain(close_prev_adj.iter()).find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidInput(format!("prices must be positive, got {p}")));
    }
    Ok(open_today.zip_map(close_prev_adj, |o, c| -(o / c).ln()))
}

/// `Q_i = 2 |H_i| / open_i`: shares bought at the open and sold at the close.
pub fn shares_traded(holdings: &DVector<f64>, open: &DVector<f64>) -> Result<DVector<f64>> {
    if holdings.len() != open.len() {
        return Err(Error::DimensionMismatch {
            what: "open prices",
            expected: holdings.len(),
            actual: open.len(),
        });
    }
    if let Some(p) = open.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::InvalidInput(format!("open price must be positive, got {p}")));
    }
    Ok(holdings.zip_map(open, |h, p| 2.0 * h.abs() / p))
}

/// Cross-sectional data fixed for one refresh period.
struct Period {
    members: Vec<usize>,
    addv: DVector<f64>,
    z: RegressionWeights,
    loadings: LoadingsMatrix,
}

fn column(m: &DMatrix<f64>, rows: &[usize], day: usize) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&i| m[(i, day)]))
}

fn unbiased_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

struct Engine<'a> {
    config: &'a BacktestConfig,
    prices: &'a PricePanel,
    classification: Option<&'a [String]>,
    styles: Option<&'a DMatrix<f64>>,
}

impl Engine<'_> {
    /// `None` when no instrument has a positive variance; such periods are flat.
    fn period(&self, start: usize) -> Result<Option<Period>> {
        let cfg = self.config;
        let addv = compute_addv(self.prices, cfg.window, start)?;
        let universe = select_universe(&addv, cfg.universe_size)?;
        let mut members = Vec::with_capacity(universe.member_indices.len());
        let mut variances = Vec::with_capacity(universe.member_indices.len());
        for &i in &universe.member_indices {
            let e: Vec<f64> = (start - cfg.window..start)
                .map(|d| -(self.prices.open[(i, d)] / self.prices.close_adj[(i, d - 1)]).ln())
                .collect();
            let var = unbiased_variance(&e);
            if var > 0.0 && var.is_finite() {
                members.push(i);
                variances.push(var);
            } else {
                warn!(
                    "dropping `{}` from the period starting {}: zero variance of expected returns",
                    self.prices.instrument_ids()[i],
                    self.prices.dates()[start]
                );
            }
        }
        if members.is_empty() {
            warn!("no tradeable instrument in the period starting {}", self.prices.dates()[start]);
            return Ok(None);
        }
        let z = RegressionWeights::new(DVector::from_iterator(members.len(), variances.iter().map(|v| 1.0 / v)))?;
        let loadings = self.loadings(&members)?;
        Ok(Some(Period {
            addv: DVector::from_iterator(members.len(), members.iter().map(|&i| addv[i])),
            members,
            z,
            loadings,
        }))
    }

    fn loadings(&self, members: &[usize]) -> Result<LoadingsMatrix> {
        let labels = || -> Result<Vec<&str>> {
            let labels = self
                .classification
                .ok_or_else(|| Error::InvalidInput("classification incarnation needs instrument labels".into()))?;
            Ok(members.iter().map(|&i| labels[i].as_str()).collect())
        };
        match self.config.loadings {
            LoadingsIncarnation::Intercept => LoadingsMatrix::intercept(members.len()),
            LoadingsIncarnation::Classification => classification_loadings(&labels()?),
            LoadingsIncarnation::ClassificationPlusStyles => {
                let styles = self
                    .styles
                    .ok_or_else(|| Error::InvalidInput("style incarnation needs a style matrix".into()))?;
                let base = classification_loadings(&labels()?)?;
                let sub = styles.select_rows(members);
                // A style that is constant zero on this universe carries no exposure.
                let keep: Vec<usize> = (0..sub.ncols()).filter(|&c| sub.column(c).iter().any(|v| *v != 0.0)).collect();
                if keep.is_empty() {
                    return Ok(base);
                }
                augment_style_columns(&base, &sub.select_columns(&keep), None)
            }
        }
    }

    fn weights(&self, period: &Period, e: &DVector<f64>) -> Result<DVector<f64>> {
        let cfg = self.config;
        match cfg.bound_mode {
            BoundMode::None => unbounded_weights(e, &period.loadings, &period.z),
            BoundMode::AddvFraction(f) => {
                let limits = PositionLimits::new(cfg.xi, f, 1.0)?;
                let dollars = establishing_bounds(&limits, cfg.investment_level, &period.addv)?;
                let bounds = dollars.scaled(1.0 / cfg.investment_level)?;
                bounded_regression(e, &period.loadings, &period.z, &bounds, &cfg.solver)
            }
        }
    }

    fn day(&self, period: &Period, d: usize) -> (DayRecord, Option<DayPositions>) {
        let date = self.prices.dates()[d];
        let members = &period.members;
        let open = column(&self.prices.open, members, d);
        let close = column(&self.prices.close_adj, members, d);
        let prev = column(&self.prices.close_adj, members, d - 1);
        let outcome = mean_reversion_returns(&open, &prev).and_then(|e| self.weights(period, &e));
        let (w, status) = match outcome {
            Ok(w) => (w, DayStatus::Traded),
            Err(Error::ZeroResiduals) => (DVector::zeros(members.len()), DayStatus::Flat),
            Err(err) => {
                warn!("skipping {date}: {err}");
                return (DayRecord::skipped(date, err.to_string()), None);
            }
        };
        let holdings = &w * self.config.investment_level;
        let pnl: f64 = (0..members.len()).map(|k| holdings[k] * (close[k] / open[k] - 1.0)).sum();
        let shares = shares_traded(&holdings, &open).map(|q| q.sum()).unwrap_or(f64::NAN);
        let record = DayRecord {
            date,
            pnl,
            gross_investment: holdings.iter().map(|h| h.abs()).sum(),
            shares_traded: shares,
            status,
        };
        let positions = self.config.keep_positions.then(|| DayPositions {
            date,
            members: members.clone(),
            weights: w,
            holdings,
            addv: period.addv.clone(),
        });
        (record, positions)
    }
}

/// Runs the protocol over every day with a full history window behind it.
///
/// `classification` (one label per instrument) is required by the
/// classification incarnations and `styles` (`N x S`) by the style one.
/// Days on which the solver fails are skipped and flagged in the report.
pub fn run_backtest(
    config: &BacktestConfig,
    prices: &PricePanel,
    classification: Option<&[String]>,
    styles: Option<&DMatrix<f64>>,
) -> Result<BacktestReport> {
    config.validate()?;
    if let Some(labels) = classification {
        if labels.len() != prices.n() {
            return Err(Error::DimensionMismatch {
                what: "classification labels",
                expected: prices.n(),
                actual: labels.len(),
            });
        }
    }
    if let Some(s) = styles {
        if s.nrows() != prices.n() {
            return Err(Error::DimensionMismatch {
                what: "style rows",
                expected: prices.n(),
                actual: s.nrows(),
            });
        }
    }
    // Variances on the first day need `window` returns, each of which needs a previous close.
    let first = config.window + 1;
    if prices.days() <= first {
        return Err(Error::InsufficientHistory {
            needed: first + 1,
            available: prices.days(),
        });
    }
    let engine = Engine {
        config,
        prices,
        classification,
        styles,
    };
    let mut records = Vec::with_capacity(prices.days() - first);
    let mut positions = config.keep_positions.then(Vec::new);
    for start in (first..prices.days()).step_by(config.refresh_period) {
        let end = (start + config.refresh_period).min(prices.days());
        let days: Vec<(DayRecord, Option<DayPositions>)> = match engine.period(start)? {
            Some(period) => {
                debug!("period {} with {} instruments", prices.dates()[start], period.members.len());
                (start..end).into_par_iter().map(|d| engine.day(&period, d)).collect()
            }
            None => (start..end).map(|d| (DayRecord::flat(prices.dates()[d]), None)).collect(),
        };
        for (record, pos) in days {
            records.push(record);
            if let (Some(all), Some(p)) = (positions.as_mut(), pos) {
                all.push(p);
            }
        }
    }
    Ok(BacktestReport::new(records, config.investment_level, positions))
}

/// Dates of the trading days a backtest over `prices` would cover.
pub fn trading_dates(prices: &PricePanel, window: usize) -> &[NaiveDate] {
    let first = (window + 1).min(prices.days());
    &prices.dates()[first..]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn reversion_examples() {
        let e = mean_reversion_returns(&v(&[102.0, 100.0, 95.0]), &v(&[100.0, 100.0, 100.0])).unwrap();
        assert!((e[0] + 1.02f64.ln()).abs() < 1e-15);
        assert!((e[0] + 0.019803).abs() < 1e-6);
        assert_eq!(e[1], 0.0);
        assert!((e[2] - 0.051293).abs() < 1e-6);
        assert!(mean_reversion_returns(&v(&[0.0]), &v(&[1.0])).is_err());
    }

    #[test]
    fn shares_examples() {
        let q = shares_traded(&v(&[1e4, 0.0, -1e4]), &v(&[50.0, 50.0, 50.0])).unwrap();
        assert_eq!(q.as_slice(), &[400.0, 0.0, 400.0]);
    }

    #[test]
    fn config_validation() {
        assert!(BacktestConfig::default().validate().is_ok());
        let bad = BacktestConfig {
            bound_mode: BoundMode::AddvFraction(0.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = BacktestConfig {
            window: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn variance_is_unbiased() {
        assert_eq!(unbiased_variance(&[1.0, 3.0]), 2.0);
    }
}
