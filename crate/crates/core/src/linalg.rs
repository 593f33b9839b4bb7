//! Small dense helpers shared by the regression and the bounded solver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Reciprocal condition estimates below this are treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// Cholesky factor of a symmetric positive-definite matrix together with a
/// cheap reciprocal-condition estimate `(min L_ii / max L_ii)^2`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    rcond: f64,
}

impl SpdFactor {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(Error::SingularMatrix { rcond: 0.0 });
        }
        let chol = Cholesky::new(matrix).ok_or(Error::SingularMatrix { rcond: 0.0 })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let rcond = if hi > 0.0 { (lo / hi).powi(2) } else { 0.0 };
        if !(rcond >= RCOND_THRESHOLD) {
            return Err(Error::SingularMatrix { rcond });
        }
        Ok(Self { chol, rcond })
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// `max_A |sum_i w_i L_iA|`.
pub fn neutrality_residual(weights: &DVector<f64>, loadings: &DMatrix<f64>) -> f64 {
    (loadings.transpose() * weights).amax()
}

/// `max_A sum_i |L_iA| |s_i|`, the natural scale for [`neutrality_residual`].
pub fn neutrality_scale(scale: &DVector<f64>, loadings: &DMatrix<f64>) -> f64 {
    loadings
        .column_iter()
        .map(|col| col.iter().zip(scale.iter()).map(|(l, s)| (l * s).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}
