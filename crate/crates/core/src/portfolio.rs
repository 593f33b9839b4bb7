//! Dollar holdings, trades and position limits.
//!
//! Weights are holdings over the total investment level `I` (long plus
//! short): `w_i = H_i / I`. Bounds are built in dollars and divided by `I`
//! before they reach the solver.

use std::collections::HashMap;
use std::io::Read;

use nalgebra::DVector;

use crate::bounded::{BoundSpec, DEFAULT_PREC};
use crate::csvio::{parse_optional, read_keyed};
use crate::{Error, Result};

fn check_level(investment_level: f64) -> Result<()> {
    if investment_level > 0.0 && investment_level.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "investment level must be positive and finite, got {investment_level}"
        )))
    }
}

fn check_addv(addv: &DVector<f64>) -> Result<()> {
    match addv.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(i) => Err(Error::InvalidInput(format!("ADDV at element {i} is {}", addv[i]))),
        None => Ok(()),
    }
}

/// Dollar holdings `H` at investment level `I`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldingsVector {
    dollars: DVector<f64>,
    investment_level: f64,
}

impl HoldingsVector {
    pub fn new(dollars: DVector<f64>, investment_level: f64) -> Result<Self> {
        check_level(investment_level)?;
        if dollars.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidInput("holdings contain non-finite values".into()));
        }
        Ok(Self {
            dollars,
            investment_level,
        })
    }

    pub fn dollars(&self) -> &DVector<f64> {
        &self.dollars
    }

    pub fn investment_level(&self) -> f64 {
        self.investment_level
    }

    /// `H / I`.
    pub fn weights(&self) -> DVector<f64> {
        &self.dollars / self.investment_level
    }

    /// `sum |H_i|`; equals `I` for holdings built from normalized weights.
    pub fn gross(&self) -> f64 {
        self.dollars.iter().map(|h| h.abs()).sum()
    }

    pub fn len(&self) -> usize {
        self.dollars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dollars.is_empty()
    }
}

/// Traded dollars `D = H - H*` relative to prior holdings.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeVector {
    dollars: DVector<f64>,
    prior: DVector<f64>,
}

impl TradeVector {
    pub fn new(dollars: DVector<f64>, prior: DVector<f64>) -> Result<Self> {
        if dollars.len() != prior.len() {
            return Err(Error::DimensionMismatch {
                what: "trade vector",
                expected: prior.len(),
                actual: dollars.len(),
            });
        }
        Ok(Self { dollars, prior })
    }

    /// Trades taking `prior` to `target`.
    pub fn between(prior: &DVector<f64>, target: &HoldingsVector) -> Result<Self> {
        Self::new(target.dollars() - prior, prior.clone())
    }

    pub fn dollars(&self) -> &DVector<f64> {
        &self.dollars
    }

    pub fn prior(&self) -> &DVector<f64> {
        &self.prior
    }

    /// `H* + D`.
    pub fn holdings(&self) -> DVector<f64> {
        &self.prior + &self.dollars
    }
}

/// Position caps as fractions: `xi` of `I`, `xi_tilde` (trades) and
/// `xi_prime` (positions) of each instrument's ADDV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionLimits {
    pub xi: f64,
    pub xi_tilde: f64,
    pub xi_prime: f64,
}

impl PositionLimits {
    pub fn new(xi: f64, xi_tilde: f64, xi_prime: f64) -> Result<Self> {
        for (name, v) in [("xi", xi), ("xi_tilde", xi_tilde), ("xi_prime", xi_prime)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidInput(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(Self {
            xi,
            xi_tilde,
            xi_prime,
        })
    }

    fn position_cap(&self, investment_level: f64, v: f64) -> f64 {
        (self.xi * investment_level).min(self.xi_prime * v)
    }
}

/// `H_i^± = ±min(xi I, xi_tilde V_i)` in dollars. Instruments with zero ADDV
/// get zero bounds and are therefore fixed at zero.
pub fn establishing_bounds(limits: &PositionLimits, investment_level: f64, addv: &DVector<f64>) -> Result<BoundSpec> {
    check_level(investment_level)?;
    check_addv(addv)?;
    let cap = addv.map(|v| (limits.xi * investment_level).min(limits.xi_tilde * v));
    BoundSpec::new(-&cap, cap)
}

/// Trade bounds from prior holdings `H*`:
/// `D^+ = min(min(xi I, xi' V) - H*, xi_tilde V)` and
/// `D^- = max(-min(xi I, xi' V) - H*, -xi_tilde V)`.
///
/// Requires `|H*_i| <= min(xi I, xi' V_i)`.
pub fn rebalancing_bounds(
    limits: &PositionLimits,
    investment_level: f64,
    addv: &DVector<f64>,
    prior: &DVector<f64>,
) -> Result<BoundSpec> {
    check_level(investment_level)?;
    check_addv(addv)?;
    if prior.len() != addv.len() {
        return Err(Error::DimensionMismatch {
            what: "prior holdings",
            expected: addv.len(),
            actual: prior.len(),
        });
    }
    let n = addv.len();
    let caps: Vec<f64> = addv.iter().map(|&v| limits.position_cap(investment_level, v)).collect();
    let violators: Vec<usize> = (0..n).filter(|&i| !(prior[i].abs() <= caps[i])).collect();
    if !violators.is_empty() {
        return Err(Error::PriorExceedsCap(violators));
    }
    let upper = DVector::from_fn(n, |i, _| (caps[i] - prior[i]).min(limits.xi_tilde * addv[i]).max(0.0));
    let lower = DVector::from_fn(n, |i, _| (-caps[i] - prior[i]).max(-limits.xi_tilde * addv[i]).min(0.0));
    BoundSpec::new(lower, upper)
}

/// `H = I w`, after checking `|sum |w| - 1| <= 1e-5`.
pub fn weights_to_holdings(w: &DVector<f64>, investment_level: f64) -> Result<HoldingsVector> {
    let sum: f64 = w.iter().map(|x| x.abs()).sum();
    if !((sum - 1.0).abs() <= DEFAULT_PREC) {
        return Err(Error::NormalizationViolated { sum });
    }
    HoldingsVector::new(w * investment_level, investment_level)
}

/// Per-instrument dollar bound overrides; `None` keeps the computed bound.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundOverrides {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl BoundOverrides {
    pub fn none(n: usize) -> Self {
        Self {
            lower: vec![None; n],
            upper: vec![None; n],
        }
    }

    /// Replaces the overridden entries of `bounds` (same units as the file,
    /// normally dollars). A zero lower override forbids shorting the
    /// instrument, as for hard-to-borrow names.
    pub fn apply(&self, bounds: &BoundSpec) -> Result<BoundSpec> {
        if self.lower.len() != bounds.len() || self.upper.len() != bounds.len() {
            return Err(Error::DimensionMismatch {
                what: "bound overrides",
                expected: bounds.len(),
                actual: self.lower.len(),
            });
        }
        let lower = DVector::from_fn(bounds.len(), |i, _| self.lower[i].unwrap_or(bounds.lower()[i]));
        let upper = DVector::from_fn(bounds.len(), |i, _| self.upper[i].unwrap_or(bounds.upper()[i]));
        BoundSpec::new(lower, upper)
    }
}

/// Reads `id,lower_override,upper_override` rows; instruments not listed keep
/// their computed bounds and empty cells mean "no override".
pub fn read_overrides<R: Read>(reader: R, ids: &[String]) -> Result<BoundOverrides> {
    let table = read_keyed(reader, 1)?;
    if table.header.len() != 3 {
        return Err(Error::DimensionMismatch {
            what: "override file columns",
            expected: 3,
            actual: table.header.len(),
        });
    }
    let position: HashMap<&str, usize> = ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    let mut out = BoundOverrides::none(ids.len());
    for (line, id, cells) in &table.rows {
        let &k = position.get(id.as_str()).ok_or_else(|| Error::UnknownId(id.clone()))?;
        out.lower[k] = parse_optional(&cells[0], *line, "lower_override")?;
        out.upper[k] = parse_optional(&cells[1], *line, "upper_override")?;
    }
    Ok(out)
}
