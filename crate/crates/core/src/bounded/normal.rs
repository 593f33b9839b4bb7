use nalgebra::{DMatrix, DVector};

use crate::linalg::SpdFactor;
use crate::loadings::LoadingsMatrix;
use crate::regression::RegressionWeights;
use crate::{Error, Result};

/// `Q~_AB = sum_{i in free} z_i L_iA L_iB` over the columns that are not
/// identically zero on the free set.
#[derive(Debug, Clone)]
pub struct RestrictedNormal {
    pub matrix: DMatrix<f64>,
    /// Loadings columns that survived the null-column drop, ascending.
    pub kept_columns: Vec<usize>,
    factor: SpdFactor,
}

impl RestrictedNormal {
    pub(crate) fn build(lam: &DMatrix<f64>, z: &DVector<f64>, free: &[usize]) -> Result<Self> {
        if free.is_empty() {
            return Err(Error::InvalidInput("free set is empty".into()));
        }
        let kept_columns: Vec<usize> = (0..lam.ncols())
            .filter(|&a| free.iter().any(|&i| lam[(i, a)] != 0.0))
            .collect();
        let k = kept_columns.len();
        let mut matrix = DMatrix::zeros(k, k);
        for &i in free {
            for (r, &a) in kept_columns.iter().enumerate() {
                let za = z[i] * lam[(i, a)];
                for (c, &b) in kept_columns.iter().enumerate().skip(r) {
                    matrix[(r, c)] += za * lam[(i, b)];
                }
            }
        }
        for r in 0..k {
            for c in 0..r {
                matrix[(r, c)] = matrix[(c, r)];
            }
        }
        let factor = SpdFactor::new(matrix.clone())?;
        Ok(Self {
            matrix,
            kept_columns,
            factor,
        })
    }

    pub fn rcond(&self) -> f64 {
        self.factor.rcond()
    }

    /// `Q~^{-1} y` for `y` indexed by the full column set; the result is indexed by `kept_columns`.
    pub fn solve_full(&self, y: &DVector<f64>) -> DVector<f64> {
        let rhs = DVector::from_iterator(self.kept_columns.len(), self.kept_columns.iter().map(|&a| y[a]));
        self.factor.solve(&rhs)
    }
}

/// Restricted normal matrix over `free_set`; see [`RestrictedNormal`].
pub fn restricted_normal_matrix(
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
    free_set: &[usize],
) -> Result<RestrictedNormal> {
    if z.len() != loadings.n() {
        return Err(Error::DimensionMismatch {
            what: "regression weights",
            expected: loadings.n(),
            actual: z.len(),
        });
    }
    if let Some(&i) = free_set.iter().find(|&&i| i >= loadings.n()) {
        return Err(Error::InvalidInput(format!("free index {i} out of range")));
    }
    RestrictedNormal::build(loadings.values(), z.as_vector(), free_set)
}
