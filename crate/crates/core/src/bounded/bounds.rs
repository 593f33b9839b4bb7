use std::io::Read;

use nalgebra::DVector;

use crate::csvio::{parse_number, read_keyed};
use crate::{Error, Result};

/// Per-element bounds `lower_i <= 0 <= upper_i`.
///
/// Elements with `lower_i == upper_i` (necessarily both zero) are fixed and
/// take no part in the iteration. "No bound" is encoded as `-1` / `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSpec {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoundSpec {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "bound vectors",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        for (index, (&lo, &up)) in lower.iter().zip(upper.iter()).enumerate() {
            if !(lo.is_finite() && up.is_finite() && lo <= 0.0 && up >= 0.0) {
                return Err(Error::InvalidBounds {
                    index,
                    lower: lo,
                    upper: up,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// `w^± = ±1` everywhere.
    pub fn unbounded(n: usize) -> Self {
        Self::symmetric(n, 1.0)
    }

    pub fn symmetric(n: usize, cap: f64) -> Self {
        Self {
            lower: DVector::from_element(n, -cap.abs()),
            upper: DVector::from_element(n, cap.abs()),
        }
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.lower[i] == self.upper[i]
    }

    /// Both vectors multiplied by `factor > 0` (e.g. `1 / I` to go from dollars to weights).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.lower * factor, &self.upper * factor)
    }

    pub fn contains(&self, w: &DVector<f64>, tol: f64) -> bool {
        w.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(w, (lo, up))| *w >= lo - tol && *w <= up + tol)
    }
}

/// How bounds are derived from per-element characteristics.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundPolicy {
    /// `|w_i| <= xi` for every element.
    UniformCap { xi: f64 },
    /// `|w_i| <= xi_tilde` where `turnover_i >= tau_star`, unbounded elsewhere.
    TurnoverCap {
        xi_tilde: f64,
        tau_star: f64,
        turnover: Vec<f64>,
    },
    Explicit { lower: Vec<f64>, upper: Vec<f64> },
}

fn check_cap(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must lie in (0, 1], got {v}")))
    }
}

pub fn bounds_from_policy(policy: &BoundPolicy, n: usize) -> Result<BoundSpec> {
    match policy {
        BoundPolicy::UniformCap { xi } => {
            check_cap("xi", *xi)?;
            Ok(BoundSpec::symmetric(n, *xi))
        }
        BoundPolicy::TurnoverCap {
            xi_tilde,
            tau_star,
            turnover,
        } => {
            check_cap("xi_tilde", *xi_tilde)?;
            if turnover.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "turnover vector",
                    expected: n,
                    actual: turnover.len(),
                });
            }
            if let Some(t) = turnover.iter().chain(std::iter::once(tau_star)).find(|t| !(**t >= 0.0)) {
                return Err(Error::InvalidInput(format!("turnover must be non-negative, got {t}")));
            }
            let cap = DVector::from_iterator(n, turnover.iter().map(|t| if t >= tau_star { *xi_tilde } else { 1.0 }));
            BoundSpec::new(-&cap, cap)
        }
        BoundPolicy::Explicit { lower, upper } => {
            if lower.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "explicit bounds",
                    expected: n,
                    actual: lower.len(),
                });
            }
            BoundSpec::new(DVector::from_column_slice(lower), DVector::from_column_slice(upper))
        }
    }
}

/// Reads `id,lower,upper` aligned to `ids`.
pub fn read_bounds<R: Read>(reader: R, ids: &[String]) -> Result<BoundSpec> {
    let table = read_keyed(reader, 1)?;
    if table.header.len() != 3 {
        return Err(Error::DimensionMismatch {
            what: "bounds file columns",
            expected: 3,
            actual: table.header.len(),
        });
    }
    let rows = table.aligned_to(ids)?;
    let mut lower = Vec::with_capacity(ids.len());
    let mut upper = Vec::with_capacity(ids.len());
    for (line, _, cells) in rows {
        lower.push(parse_number(&cells[0], *line, "lower")?);
        upper.push(parse_number(&cells[1], *line, "upper")?);
    }
    BoundSpec::new(DVector::from_vec(lower), DVector::from_vec(upper))
}
