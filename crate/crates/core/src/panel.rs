//! Time-series panels, ADDV and universe selection.
//!
//! A panel file is a CSV with one row per instrument. Line 1 carries the
//! ordering flag, line 2 the header:
//!
//! ```text
//! # order=newest-first
//! id,2014-09-05,2014-09-04,2014-09-03
//! AAA,1.0,2.0,3.0
//! ```
//!
//! In memory a [`TimeSeriesPanel`] is always newest-first: column 0 is `t_0`.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};

use chrono::NaiveDate;
use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Default rolling window and refresh cadence, in trading days.
pub const DEFAULT_WINDOW: usize = 21;

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateOrder {
    NewestFirst,
    OldestFirst,
}

impl DateOrder {
    fn flag(self) -> &'static str {
        match self {
            DateOrder::NewestFirst => "# order=newest-first",
            DateOrder::OldestFirst => "# order=oldest-first",
        }
    }

    fn parse(line: &str) -> Option<Self> {
        let compact: String = line.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.as_str() {
            "#order=newest-first" => Some(DateOrder::NewestFirst),
            "#order=oldest-first" => Some(DateOrder::OldestFirst),
            _ => None,
        }
    }
}

/// `N` instruments observed at `M + 1` dates, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    instrument_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    values: DMatrix<f64>,
}

impl TimeSeriesPanel {
    /// Builds a panel from newest-first dates. Values must be finite.
    pub fn new(instrument_ids: Vec<String>, dates: Vec<NaiveDate>, values: DMatrix<f64>) -> Result<Self> {
        if instrument_ids.is_empty() {
            return Err(Error::InvalidInput("panel has no instruments".into()));
        }
        if dates.is_empty() {
            return Err(Error::InvalidInput("panel has no dates".into()));
        }
        if values.nrows() != instrument_ids.len() {
            return Err(Error::DimensionMismatch {
                what: "panel rows",
                expected: instrument_ids.len(),
                actual: values.nrows(),
            });
        }
        if values.ncols() != dates.len() {
            return Err(Error::DimensionMismatch {
                what: "panel columns",
                expected: dates.len(),
                actual: values.ncols(),
            });
        }
        let mut seen = HashSet::new();
        for id in &instrument_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] <= w[1]) {
            return Err(Error::InvalidInput(format!(
                "dates not strictly newest-first: {} then {}",
                w[0], w[1]
            )));
        }
        if let Some((k, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (r, c) = (k % values.nrows(), k / values.nrows());
            return Err(Error::MissingCell {
                row: instrument_ids[r].clone(),
                column: dates[c].to_string(),
            });
        }
        Ok(Self {
            instrument_ids,
            dates,
            values,
        })
    }

    pub fn instrument_ids(&self) -> &[String] {
        &self.instrument_ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Number of instruments `N`.
    pub fn n(&self) -> usize {
        self.instrument_ids.len()
    }

    /// History length `M`; the panel holds `M + 1` observations.
    pub fn m(&self) -> usize {
        self.dates.len() - 1
    }

    /// The most recent cross-section `alpha_i(t_0)`.
    pub fn latest(&self) -> DVector<f64> {
        self.values.column(0).into_owned()
    }

    /// Columns reordered oldest-first, as used by the price panel.
    fn chronological(&self) -> DMatrix<f64> {
        let d = self.values.ncols();
        DMatrix::from_fn(self.n(), d, |i, j| self.values[(i, d - 1 - j)])
    }
}

/// Parses a panel CSV. Any empty cell is rejected with its location.
pub fn load_panel<R: Read>(source: R) -> Result<TimeSeriesPanel> {
    let mut reader = BufReader::new(source);
    let mut flag_line = String::new();
    reader.read_line(&mut flag_line)?;
    let order = DateOrder::parse(flag_line.trim()).ok_or_else(|| Error::Parse {
        line: 1,
        column: String::new(),
        message: "expected `# order=newest-first` or `# order=oldest-first`".into(),
    })?;

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("id") {
        return Err(Error::Parse {
            line: 2,
            column: header.first().cloned().unwrap_or_default(),
            message: "first header column must be `id`".into(),
        });
    }
    let mut dates = header[1..]
        .iter()
        .map(|h| {
            NaiveDate::parse_from_str(h, DATE_FORMAT).map_err(|e| Error::Parse {
                line: 2,
                column: h.clone(),
                message: format!("bad ISO date: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let line = k + 3;
        let record = record.map_err(|e| Error::Parse {
            line,
            column: String::new(),
            message: e.to_string(),
        })?;
        let id = record.get(0).unwrap_or_default().to_string();
        for (cell, column) in record.iter().skip(1).zip(&header[1..]) {
            if cell.is_empty() {
                return Err(Error::MissingCell {
                    row: id.clone(),
                    column: column.clone(),
                });
            }
            let v = cell.parse::<f64>().map_err(|_| Error::Parse {
                line,
                column: column.clone(),
                message: format!("`{cell}` is not numeric"),
            })?;
            data.push(v);
        }
        ids.push(id);
    }

    let mut values = DMatrix::from_row_slice(ids.len(), dates.len(), &data);
    if order == DateOrder::OldestFirst {
        dates.reverse();
        let d = values.ncols();
        values = DMatrix::from_fn(values.nrows(), d, |i, j| values[(i, d - 1 - j)]);
    }
    TimeSeriesPanel::new(ids, dates, values)
}

/// Writes a panel newest-first. `load_panel` of the output reproduces the panel exactly.
pub fn serialize_panel<W: Write>(panel: &TimeSeriesPanel, mut sink: W) -> Result<()> {
    writeln!(sink, "{}", DateOrder::NewestFirst.flag())?;
    let mut wtr = csv::Writer::from_writer(sink);
    let mut header = vec!["id".to_string()];
    header.extend(panel.dates.iter().map(|d| d.format(DATE_FORMAT).to_string()));
    wtr.write_record(&header)?;
    for (i, id) in panel.instrument_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(panel.values.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Open, adjusted close and volume for `N` instruments over `D` days.
///
/// Unlike [`TimeSeriesPanel`], columns here run oldest-first (day 0 is the
/// earliest), which is the natural order for walking a backtest forward.
#[derive(Debug, Clone)]
pub struct PricePanel {
    instrument_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    pub open: DMatrix<f64>,
    pub close_adj: DMatrix<f64>,
    pub volume: DMatrix<f64>,
}

impl PricePanel {
    /// `dates` must be strictly increasing; every entry must be strictly positive.
    pub fn new(
        instrument_ids: Vec<String>,
        dates: Vec<NaiveDate>,
        open: DMatrix<f64>,
        close_adj: DMatrix<f64>,
        volume: DMatrix<f64>,
    ) -> Result<Self> {
        let (n, d) = (instrument_ids.len(), dates.len());
        for (what, m) in [("open", &open), ("close_adj", &close_adj), ("volume", &volume)] {
            if m.shape() != (n, d) {
                return Err(Error::InvalidInput(format!(
                    "{what} matrix is {}x{}, expected {n}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if let Some((k, v)) = m.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidInput(format!(
                    "{what} for `{}` on {} is {v}, must be strictly positive",
                    instrument_ids[k % n],
                    dates[k / n]
                )));
            }
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("price dates must be strictly increasing".into()));
        }
        Ok(Self {
            instrument_ids,
            dates,
            open,
            close_adj,
            volume,
        })
    }

    /// Assembles a price panel from three loaded panels sharing ids and dates.
    pub fn from_panels(
        open: &TimeSeriesPanel,
        close_adj: &TimeSeriesPanel,
        volume: &TimeSeriesPanel,
    ) -> Result<Self> {
        for other in [close_adj, volume] {
            if other.instrument_ids != open.instrument_ids {
                return Err(Error::InvalidInput("price panels disagree on instrument ids".into()));
            }
            if other.dates != open.dates {
                return Err(Error::InvalidInput("price panels disagree on dates".into()));
            }
        }
        let mut dates = open.dates.clone();
        dates.reverse();
        Self::new(
            open.instrument_ids.clone(),
            dates,
            open.chronological(),
            close_adj.chronological(),
            volume.chronological(),
        )
    }

    /// Open, adjusted close and volume as newest-first panels, the inverse of [`Self::from_panels`].
    pub fn to_panels(&self) -> Result<[TimeSeriesPanel; 3]> {
        let mut dates = self.dates.clone();
        dates.reverse();
        let d = dates.len();
        let flip = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), d, |i, j| m[(i, d - 1 - j)]);
        Ok([
            TimeSeriesPanel::new(self.instrument_ids.clone(), dates.clone(), flip(&self.open))?,
            TimeSeriesPanel::new(self.instrument_ids.clone(), dates.clone(), flip(&self.close_adj))?,
            TimeSeriesPanel::new(self.instrument_ids.clone(), dates, flip(&self.volume))?,
        ])
    }

    pub fn instrument_ids(&self) -> &[String] {
        &self.instrument_ids
    }

    /// Trading dates, oldest first.
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n(&self) -> usize {
        self.instrument_ids.len()
    }

    pub fn days(&self) -> usize {
        self.dates.len()
    }
}

/// Average daily dollar volume over the `window` days strictly before day
/// index `as_of` (so `as_of` itself is excluded; `as_of == days()` means
/// "after the last day").
pub fn compute_addv(prices: &PricePanel, window: usize, as_of: usize) -> Result<DVector<f64>> {
    if window == 0 {
        return Err(Error::InvalidInput("ADDV window must be at least 1".into()));
    }
    if as_of > prices.days() {
        return Err(Error::InvalidInput(format!(
            "evaluation day {as_of} beyond the {} available days",
            prices.days()
        )));
    }
    if as_of < window {
        return Err(Error::InsufficientHistory {
            needed: window,
            available: as_of,
        });
    }
    let start = as_of - window;
    Ok(DVector::from_fn(prices.n(), |i, _| {
        (start..as_of)
            .map(|d| prices.close_adj[(i, d)] * prices.volume[(i, d)])
            .sum::<f64>()
            / window as f64
    }))
}

/// Instruments chosen for trading.
#[derive(Debug, Clone, PartialEq)]
pub struct UniverseSelection {
    /// Selected instrument indices, ascending.
    pub member_indices: Vec<usize>,
    pub addv: DVector<f64>,
    pub rebalance_period: usize,
    /// Set when fewer than the requested number of instruments were available.
    pub truncated: bool,
}

impl UniverseSelection {
    pub fn with_rebalance_period(mut self, period: usize) -> Self {
        self.rebalance_period = period;
        self
    }
}

/// Top `top_n` instruments by ADDV; ties go to the lower index.
pub fn select_universe(addv: &DVector<f64>, top_n: usize) -> Result<UniverseSelection> {
    if top_n == 0 {
        return Err(Error::InvalidInput("universe size must be at least 1".into()));
    }
    if let Some(bad) = addv.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidInput(format!("ADDV must be non-negative, got {bad}")));
    }
    let n = addv.len();
    let truncated = top_n > n;
    if truncated {
        warn!("requested universe of {top_n} but only {n} instruments are available");
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| addv[b].total_cmp(&addv[a]).then(a.cmp(&b)));
    order.truncate(top_n.min(n));
    order.sort_unstable();
    Ok(UniverseSelection {
        member_indices: order,
        addv: addv.clone(),
        rebalance_period: DEFAULT_WINDOW,
        truncated,
    })
}
