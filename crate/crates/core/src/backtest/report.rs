use std::io::Write;

use chrono::NaiveDate;
use nalgebra::DVector;

use super::TRADING_DAYS_PER_YEAR;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum DayStatus {
    Traded,
    /// Expected returns had no residual after the regression; nothing traded.
    Flat,
    /// The solver failed; the day is excluded from the statistics.
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord {
    pub date: NaiveDate,
    pub pnl: f64,
    /// `sum |H_i|`.
    pub gross_investment: f64,
    pub shares_traded: f64,
    pub status: DayStatus,
}

impl DayRecord {
    pub(super) fn skipped(date: NaiveDate, reason: String) -> Self {
        Self {
            date,
            pnl: 0.0,
            gross_investment: 0.0,
            shares_traded: 0.0,
            status: DayStatus::Skipped(reason),
        }
    }

    pub(super) fn flat(date: NaiveDate) -> Self {
        Self {
            status: DayStatus::Flat,
            ..Self::skipped(date, String::new())
        }
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self.status, DayStatus::Skipped(_))
    }
}

/// Holdings of one day, indexed like `members` (instrument indices into the price panel).
#[derive(Debug, Clone, PartialEq)]
pub struct DayPositions {
    pub date: NaiveDate,
    pub members: Vec<usize>,
    pub weights: DVector<f64>,
    pub holdings: DVector<f64>,
    pub addv: DVector<f64>,
}

/// `252 * mean(pnl) / I`.
pub fn annualized_roc(pnl: &[f64], investment_level: f64) -> f64 {
    if pnl.is_empty() {
        return 0.0;
    }
    TRADING_DAYS_PER_YEAR * mean(pnl) / investment_level
}

/// `sqrt(252) * mean(pnl) / stdev(pnl)` with the `n - 1` standard deviation;
/// `None` when fewer than two days or the deviation is zero.
pub fn annualized_sharpe(pnl: &[f64]) -> Option<f64> {
    if pnl.len() < 2 {
        return None;
    }
    let m = mean(pnl);
    let var = pnl.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / (pnl.len() - 1) as f64;
    (var > 0.0).then(|| TRADING_DAYS_PER_YEAR.sqrt() * m / var.sqrt())
}

/// Total P&L over total shares traded, in cents per share; 0 without trades.
pub fn cents_per_share(total_pnl: f64, total_shares: f64) -> f64 {
    if total_shares > 0.0 {
        100.0 * total_pnl / total_shares
    } else {
        0.0
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub days: Vec<DayRecord>,
    pub investment_level: f64,
    pub roc: f64,
    pub sr: Option<f64>,
    pub cps: f64,
    pub total_pnl: f64,
    pub total_shares: f64,
    pub positions: Option<Vec<DayPositions>>,
}

impl BacktestReport {
    pub fn new(days: Vec<DayRecord>, investment_level: f64, positions: Option<Vec<DayPositions>>) -> Self {
        let counted: Vec<&DayRecord> = days.iter().filter(|d| !d.is_skipped()).collect();
        let pnl: Vec<f64> = counted.iter().map(|d| d.pnl).collect();
        let total_pnl = pnl.iter().sum();
        let total_shares = counted.iter().map(|d| d.shares_traded).sum();
        Self {
            roc: annualized_roc(&pnl, investment_level),
            sr: annualized_sharpe(&pnl),
            cps: cents_per_share(total_pnl, total_shares),
            total_pnl,
            total_shares,
            days,
            investment_level,
            positions,
        }
    }

    /// P&L of the days that count towards the statistics.
    pub fn daily_pnl(&self) -> Vec<(NaiveDate, f64)> {
        self.days.iter().filter(|d| !d.is_skipped()).map(|d| (d.date, d.pnl)).collect()
    }

    pub fn skipped_days(&self) -> Vec<(NaiveDate, &str)> {
        self.days
            .iter()
            .filter_map(|d| match &d.status {
                DayStatus::Skipped(why) => Some((d.date, why.as_str())),
                _ => None,
            })
            .collect()
    }

    /// Daily rows, a blank line, then the `roc,sr,cps` block. Skipped days are
    /// left out of the rows and listed as `#` comments after the summary.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "date,pnl,gross_investment,shares_traded")?;
        for d in self.days.iter().filter(|d| !d.is_skipped()) {
            writeln!(out, "{},{},{},{}", d.date, d.pnl, d.gross_investment, d.shares_traded)?;
        }
        writeln!(out)?;
        writeln!(out, "roc,sr,cps")?;
        let sr = self.sr.map(|s| s.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{}", self.roc, sr, self.cps)?;
        for (date, why) in self.skipped_days() {
            writeln!(out, "# skipped {date}: {why}")?;
        }
        Ok(())
    }

    /// `date,cumulative_pnl` for plotting.
    pub fn write_cumulative_pnl<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "date,cumulative_pnl")?;
        let mut total = 0.0;
        for (date, pnl) in self.daily_pnl() {
            total += pnl;
            writeln!(out, "{date},{total}")?;
        }
        Ok(())
    }

    /// Long-format `date,id,weight,holding`; nothing is written without kept positions.
    pub fn write_positions<W: Write>(&self, ids: &[String], mut out: W) -> Result<()> {
        writeln!(out, "date,id,weight,holding")?;
        for day in self.positions.iter().flatten() {
            for (k, &i) in day.members.iter().enumerate() {
                writeln!(out, "{},{},{},{}", day.date, ids[i], day.weights[k], day.holdings[k])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(n: u32, pnl: f64, shares: f64) -> DayRecord {
        DayRecord {
            date: NaiveDate::from_ymd_opt(2024, 1, n).unwrap(),
            pnl,
            gross_investment: 1.0,
            shares_traded: shares,
            status: DayStatus::Traded,
        }
    }

    #[test]
    fn metrics() {
        let r = BacktestReport::new(vec![day(1, 1.0, 10.0), day(2, 3.0, 10.0)], 100.0, None);
        assert_eq!(r.roc, 252.0 * 2.0 / 100.0);
        assert_eq!(r.sr, Some(252f64.sqrt() * 2.0 / 2f64.sqrt()));
        assert_eq!(r.cps, 100.0 * 4.0 / 20.0);
    }

    #[test]
    fn constant_pnl_has_no_sharpe() {
        let r = BacktestReport::new(vec![day(1, 0.0, 0.0), day(2, 0.0, 0.0)], 1.0, None);
        assert_eq!(r.sr, None);
        assert_eq!(r.cps, 0.0);
        assert_eq!(r.roc, 0.0);
    }

    #[test]
    fn skipped_days_excluded() {
        let mut days = vec![day(1, 1.0, 1.0), day(2, 3.0, 1.0)];
        days.push(DayRecord::skipped(NaiveDate::from_ymd_opt(2024, 1, 3).unwrap(), "x".into()));
        let r = BacktestReport::new(days, 1.0, None);
        assert_eq!(r.total_pnl, 4.0);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("# skipped 2024-01-03: x"));
        assert_eq!(text.lines().filter(|l| l.starts_with("2024")).count(), 2);
    }
}
