//! Unbounded weighted cross-sectional regression.
//!
//! Residuals `eps = alpha - L Q^{-1} L^T Z alpha` with `Q = L^T Z L`, and the
//! unbounded weights `w = gamma * z * eps` with `gamma` fixed by `sum |w| = 1`.
//! No implicit intercept is added: include it in the loadings if wanted.

use nalgebra::{DMatrix, DVector};

use crate::linalg::SpdFactor;
use crate::loadings::{CovarianceMatrix, LoadingsMatrix};
use crate::{Error, Result};

/// `sum z |eps|` below this fraction of `sum z |alpha|` counts as "all residuals zero".
pub(crate) const ZERO_RESIDUAL_RTOL: f64 = 1e-14;

/// Strictly positive, finite regression weights `z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionWeights(DVector<f64>);

impl RegressionWeights {
    pub fn new(z: DVector<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::InvalidInput("regression weights are empty".into()));
        }
        if let Some((i, v)) = z.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "regression weight {i} is {v}; weights must be positive and finite"
            )));
        }
        Ok(Self(z))
    }

    pub fn ones(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0))
    }

    /// Inverse sample variances `z_i = 1 / C_ii`.
    pub fn from_cov(cov: &CovarianceMatrix) -> Result<Self> {
        Self::new(DVector::from_iterator(cov.n(), cov.diag().into_iter().map(|c| 1.0 / c)))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `z_i = 1 / C_ii`.
pub fn regression_weights_from_cov(cov: &CovarianceMatrix) -> Result<RegressionWeights> {
    RegressionWeights::from_cov(cov)
}

#[derive(Debug, Clone)]
pub struct RegressionResult {
    pub residuals: DVector<f64>,
    pub fitted_coeffs: DVector<f64>,
    pub normal_matrix: DMatrix<f64>,
}

pub(crate) fn check_dims(alpha: &DVector<f64>, loadings: &LoadingsMatrix, z: &RegressionWeights) -> Result<()> {
    let n = alpha.len();
    if loadings.n() != n {
        return Err(Error::DimensionMismatch {
            what: "loadings rows",
            expected: n,
            actual: loadings.n(),
        });
    }
    if z.len() != n {
        return Err(Error::DimensionMismatch {
            what: "regression weights",
            expected: n,
            actual: z.len(),
        });
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidInput("alpha contains non-finite values".into()));
    }
    Ok(())
}

/// Weighted least-squares fit of `alpha` on the loadings columns.
pub fn weighted_residuals(
    alpha: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
) -> Result<RegressionResult> {
    check_dims(alpha, loadings, z)?;
    let lam = loadings.values();
    let z = z.as_vector();
    let weighted = DMatrix::from_fn(lam.nrows(), lam.ncols(), |i, a| z[i] * lam[(i, a)]);
    let q = lam.transpose() * &weighted;
    let factor = SpdFactor::new(q.clone())?;
    let coeffs = factor.solve(&(weighted.transpose() * alpha));
    let residuals = alpha - lam * &coeffs;
    Ok(RegressionResult {
        residuals,
        fitted_coeffs: coeffs,
        normal_matrix: q,
    })
}

fn weighted_abs_sum(eps: &DVector<f64>, z: &RegressionWeights) -> f64 {
    eps.iter().zip(z.as_vector().iter()).map(|(e, z)| z * e.abs()).sum()
}

/// `gamma^(0) = 1 / sum z_i |eps_i|`.
pub fn gamma_seed(result: &RegressionResult, z: &RegressionWeights) -> Result<f64> {
    let s = weighted_abs_sum(&result.residuals, z);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::ZeroResiduals);
    }
    Ok(1.0 / s)
}

/// Residuals together with the seed, rejecting residuals that are zero up to rounding.
pub(crate) fn residuals_and_seed(
    alpha: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
) -> Result<(RegressionResult, f64)> {
    let reg = weighted_residuals(alpha, loadings, z)?;
    let scale = weighted_abs_sum(alpha, z);
    if weighted_abs_sum(&reg.residuals, z) <= ZERO_RESIDUAL_RTOL * scale {
        return Err(Error::ZeroResiduals);
    }
    let gamma = gamma_seed(&reg, z)?;
    Ok((reg, gamma))
}

/// Unbounded regression weights `w_i = gamma z_i eps_i`, L1-normalized.
pub fn unbounded_weights(
    alpha: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
) -> Result<DVector<f64>> {
    let (reg, gamma) = residuals_and_seed(alpha, loadings, z)?;
    Ok(reg.residuals.component_mul(z.as_vector()) * gamma)
}
