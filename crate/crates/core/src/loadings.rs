//! Sample covariance and loadings-matrix construction.

use std::collections::HashMap;
use std::io::Read;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::csvio::{parse_number, read_keyed};
use crate::panel::TimeSeriesPanel;
use crate::{Error, Result};

/// Default relative eigenvalue cutoff for [`pca_loadings`].
pub const DEFAULT_EIGEN_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric covariance with a strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    values: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "covariance must be square and non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        let scale = values.amax();
        let asym = (&values - values.transpose()).amax();
        if !(asym <= SYMMETRY_TOL * scale) {
            return Err(Error::InvalidInput(format!("covariance is not symmetric (max asymmetry {asym:e})")));
        }
        if let Some(i) = (0..values.nrows()).find(|&i| !(values[(i, i)] > 0.0)) {
            return Err(Error::ZeroVariance(format!("#{i}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn diag(&self) -> Vec<f64> {
        self.values.diagonal().iter().copied().collect()
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Unbiased sample covariance of the panel's rows over its `M + 1` observations.
pub fn sample_covariance(panel: &TimeSeriesPanel) -> Result<CovarianceMatrix> {
    if panel.m() < 1 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: panel.m() + 1,
        });
    }
    let x = panel.values();
    let obs = x.ncols() as f64;
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        let mean = row.sum() / obs;
        row.add_scalar_mut(-mean);
    }
    let mut c = &centered * centered.transpose() / (obs - 1.0);
    c = (&c + c.transpose()) * 0.5;
    if let Some(i) = (0..c.nrows()).find(|&i| !(c[(i, i)] > 0.0)) {
        return Err(Error::ZeroVariance(panel.instrument_ids()[i].clone()));
    }
    CovarianceMatrix::new(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadingsKind {
    PrincipalComponents,
    Intercept,
    Classification,
    ClassificationPlusStyles,
}

/// The `N x K` loadings matrix.
///
/// The first `classification_columns` columns form a binary block whose rows
/// each sum to one (zero for principal components).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingsMatrix {
    values: DMatrix<f64>,
    kind: LoadingsKind,
    column_names: Vec<String>,
    classification_columns: usize,
}

impl LoadingsMatrix {
    fn build(
        values: DMatrix<f64>,
        kind: LoadingsKind,
        column_names: Vec<String>,
        classification_columns: usize,
    ) -> Result<Self> {
        if values.ncols() == 0 || values.nrows() == 0 {
            return Err(Error::InvalidInput("loadings need at least one row and one column".into()));
        }
        if let Some(k) = values.column_iter().position(|c| c.iter().all(|v| *v == 0.0)) {
            return Err(Error::ZeroColumn(k));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("loadings contain non-finite entries".into()));
        }
        Ok(Self {
            values,
            kind,
            column_names,
            classification_columns,
        })
    }

    /// Single all-ones column.
    pub fn intercept(n: usize) -> Result<Self> {
        Self::build(
            DMatrix::from_element(n, 1, 1.0),
            LoadingsKind::Intercept,
            vec!["intercept".into()],
            1,
        )
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> LoadingsKind {
        self.kind
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn classification_columns(&self) -> usize {
        self.classification_columns
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    /// Rows restricted to `rows`, dropping columns that become identically zero.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let sub = self.values.select_rows(rows);
        let keep: Vec<usize> = (0..sub.ncols())
            .filter(|&k| sub.column(k).iter().any(|v| *v != 0.0))
            .collect();
        let classification_columns = keep.iter().filter(|&&k| k < self.classification_columns).count();
        Self::build(
            sub.select_columns(&keep),
            self.kind,
            keep.iter().map(|&k| self.column_names[k].clone()).collect(),
            classification_columns,
        )
    }
}

/// Leading principal components of `cov` with eigenvalue above `eigen_tol * lambda_max`.
///
/// Columns are orthonormal, ordered by descending eigenvalue, and each is
/// signed so that its largest-magnitude entry is positive.
pub fn pca_loadings(cov: &CovarianceMatrix, eigen_tol: f64) -> Result<LoadingsMatrix> {
    let eig = SymmetricEigen::new(cov.values().clone());
    let lambda_max = eig.eigenvalues.max();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&k| lambda_max > 0.0 && eig.eigenvalues[k] > eigen_tol * lambda_max)
        .collect();
    if kept.is_empty() {
        return Err(Error::NoPositiveEigenvalues { threshold: eigen_tol });
    }
    let mut values = eig.eigenvectors.select_columns(&kept);
    for mut col in values.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    let names = (1..=kept.len()).map(|k| format!("pc{k}")).collect();
    LoadingsMatrix::build(values, LoadingsKind::PrincipalComponents, names, 0)
}

/// One binary column per distinct label, in order of first appearance.
pub fn classification_loadings<S: AsRef<str>>(labels: &[S]) -> Result<LoadingsMatrix> {
    let mut categories: Vec<String> = Vec::new();
    let mut index = HashMap::new();
    let codes: Vec<usize> = labels
        .iter()
        .map(|l| {
            let l = l.as_ref();
            *index.entry(l.to_string()).or_insert_with(|| {
                categories.push(l.to_string());
                categories.len() - 1
            })
        })
        .collect();
    let values = DMatrix::from_fn(labels.len(), categories.len(), |i, a| if codes[i] == a { 1.0 } else { 0.0 });
    let k = categories.len();
    LoadingsMatrix::build(values, LoadingsKind::Classification, categories, k)
}

/// Appends style columns to `base`. Styles are not orthogonalized.
pub fn augment_style_columns(
    base: &LoadingsMatrix,
    styles: &DMatrix<f64>,
    style_names: Option<&[String]>,
) -> Result<LoadingsMatrix> {
    if styles.ncols() == 0 {
        return Err(Error::InvalidInput("at least one style column is required".into()));
    }
    if styles.nrows() != base.n() {
        return Err(Error::DimensionMismatch {
            what: "style rows",
            expected: base.n(),
            actual: styles.nrows(),
        });
    }
    if let Some(s) = styles.column_iter().position(|c| c.iter().all(|v| *v == 0.0)) {
        return Err(Error::ZeroColumn(s));
    }
    let (n, k, s) = (base.n(), base.k(), styles.ncols());
    let values = DMatrix::from_fn(n, k + s, |i, a| if a < k { base.values[(i, a)] } else { styles[(i, a - k)] });
    let mut names = base.column_names.clone();
    match style_names {
        Some(given) if given.len() == s => names.extend(given.iter().cloned()),
        _ => names.extend((1..=s).map(|j| format!("style{j}"))),
    }
    let kind = match base.kind {
        LoadingsKind::PrincipalComponents => LoadingsKind::PrincipalComponents,
        _ => LoadingsKind::ClassificationPlusStyles,
    };
    LoadingsMatrix::build(values, kind, names, base.classification_columns)
}

/// Reads `id,label` aligned to `ids`.
pub fn read_classification<R: Read>(reader: R, ids: &[String]) -> Result<Vec<String>> {
    let table = read_keyed(reader, 1)?;
    if table.header.len() != 2 {
        return Err(Error::DimensionMismatch {
            what: "classification file columns",
            expected: 2,
            actual: table.header.len(),
        });
    }
    table
        .aligned_to(ids)?
        .into_iter()
        .map(|(line, id, cells)| {
            if cells[0].is_empty() {
                Err(Error::Parse {
                    line: *line,
                    column: "label".into(),
                    message: format!("instrument `{id}` has no label"),
                })
            } else {
                Ok(cells[0].clone())
            }
        })
        .collect()
}

/// Reads `id,<style1>,...,<styleS>` aligned to `ids`, returning style names and the `N x S` matrix.
pub fn read_styles<R: Read>(reader: R, ids: &[String]) -> Result<(Vec<String>, DMatrix<f64>)> {
    let table = read_keyed(reader, 1)?;
    let names: Vec<String> = table.header[1..].to_vec();
    if names.is_empty() {
        return Err(Error::InvalidInput("style file has no style columns".into()));
    }
    let rows = table.aligned_to(ids)?;
    let mut data = Vec::with_capacity(ids.len() * names.len());
    for (line, _, cells) in rows {
        for (cell, name) in cells.iter().zip(&names) {
            data.push(parse_number(cell, *line, name)?);
        }
    }
    Ok((names.clone(), DMatrix::from_row_slice(ids.len(), names.len(), &data)))
}

/// Reads a square covariance matrix `id,<id_1>,...,<id_N>` aligned to `ids`
/// (rows and columns are both reordered).
pub fn read_covariance<R: Read>(reader: R, ids: &[String]) -> Result<CovarianceMatrix> {
    let table = read_keyed(reader, 1)?;
    let columns = &table.header[1..];
    if columns.len() != ids.len() {
        return Err(Error::DimensionMismatch {
            what: "covariance columns",
            expected: ids.len(),
            actual: columns.len(),
        });
    }
    let col_of: Vec<usize> = ids
        .iter()
        .map(|id| columns.iter().position(|c| c == id).ok_or_else(|| Error::MissingId(id.clone())))
        .collect::<Result<_>>()?;
    let rows = table.aligned_to(ids)?;
    let mut values = DMatrix::zeros(ids.len(), ids.len());
    for (r, (line, _, cells)) in rows.into_iter().enumerate() {
        for (c, &k) in col_of.iter().enumerate() {
            values[(r, c)] = parse_number(&cells[k], *line, &columns[k])?;
        }
    }
    CovarianceMatrix::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn panel(rows: &[&[f64]]) -> TimeSeriesPanel {
        let n = rows.len();
        let d = rows[0].len();
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let dates = (0..d).rev().map(|k| start + chrono::Days::new(k as u64)).collect();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        TimeSeriesPanel::new(
            (0..n).map(|i| format!("i{i}")).collect(),
            dates,
            DMatrix::from_row_slice(n, d, &flat),
        )
        .unwrap()
    }

    #[test]
    fn identical_series_are_perfectly_correlated() {
        let c = sample_covariance(&panel(&[&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]])).unwrap();
        assert_eq!(c.values()[(0, 1)], c.values()[(0, 0)]);
    }

    #[test]
    fn alternating_series_anti_correlated() {
        let c = sample_covariance(&panel(&[&[1.0, -1.0, 1.0, -1.0], &[-1.0, 1.0, -1.0, 1.0]])).unwrap();
        let v = c.values();
        let rho = v[(0, 1)] / (v[(0, 0)] * v[(1, 1)]).sqrt();
        assert!((rho + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_names_instrument() {
        let err = sample_covariance(&panel(&[&[1.0, 2.0], &[3.0, 3.0]])).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance(id) if id == "i1"));
    }

    #[test]
    fn single_observation_rejected() {
        assert!(sample_covariance(&panel(&[&[1.0]])).is_err());
    }

    #[test]
    fn pca_identity_is_isotropic() {
        let cov = CovarianceMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let l = pca_loadings(&cov, DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(l.k(), 3);
        let gram = l.values().transpose() * l.values();
        assert!((gram - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn pca_rank_one() {
        let c = sample_covariance(&panel(&[&[1.0, -1.0, 1.0, -1.0], &[1.0, -1.0, 1.0, -1.0]])).unwrap();
        let l = pca_loadings(&c, DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(l.k(), 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((l.values()[(0, 0)] - h).abs() < 1e-12);
        assert!((l.values()[(1, 0)] - h).abs() < 1e-12);
    }

    #[test]
    fn pca_all_zero_rejected() {
        let cov = CovarianceMatrix {
            values: DMatrix::zeros(2, 2),
        };
        assert!(matches!(pca_loadings(&cov, 1e-10), Err(Error::NoPositiveEigenvalues { .. })));
    }

    #[test]
    fn classification_one_hot() {
        let l = classification_loadings(&["a", "a", "b"]).unwrap();
        assert_eq!(l.values(), &DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]));
        assert_eq!(l.kind(), LoadingsKind::Classification);
        assert_eq!(l.column_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn classification_degenerate_and_singletons() {
        let l = classification_loadings(&["x", "x", "x"]).unwrap();
        assert_eq!(l.values(), &DMatrix::from_element(3, 1, 1.0));
        let l = classification_loadings(&["a", "b", "c"]).unwrap();
        assert_eq!(l.values(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn style_augmentation() {
        let base = LoadingsMatrix::intercept(2).unwrap();
        let l = augment_style_columns(&base, &DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), None).unwrap();
        assert_eq!(l.values(), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]));
        assert_eq!(l.classification_columns(), 1);

        let zero = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        assert!(matches!(augment_style_columns(&base, &zero, None), Err(Error::ZeroColumn(1))));

        let cls = classification_loadings(&["a", "b", "a", "b"]).unwrap();
        let l = augment_style_columns(&cls, &DMatrix::from_row_slice(4, 1, &[0.1, 0.2, 0.3, 0.4]), None).unwrap();
        assert_eq!((l.n(), l.k()), (4, 3));
        assert_eq!(l.kind(), LoadingsKind::ClassificationPlusStyles);
    }

    #[test]
    fn select_rows_drops_null_columns() {
        let cls = classification_loadings(&["a", "b", "a"]).unwrap();
        let sub = cls.select_rows(&[0, 2]).unwrap();
        assert_eq!(sub.k(), 1);
        assert_eq!(sub.column_names(), &["a".to_string()]);
    }

    #[test]
    fn reads_covariance_file() {
        let ids = vec!["b".to_string(), "a".to_string()];
        let c = read_covariance("id,a,b\na,1,0.5\nb,0.5,4\n".as_bytes(), &ids).unwrap();
        assert_eq!(c.values(), &DMatrix::from_row_slice(2, 2, &[4.0, 0.5, 0.5, 1.0]));
        assert!(read_covariance("id,a,b\na,1,0.5\nb,0.6,4\n".as_bytes(), &ids).is_err());
    }

    #[test]
    fn reads_label_and_style_files() {
        let ids: Vec<String> = vec!["B".into(), "A".into()];
        let labels = read_classification("id,label\nA,tech\nB,energy\n".as_bytes(), &ids).unwrap();
        assert_eq!(labels, vec!["energy", "tech"]);
        let (names, m) = read_styles("id,mom,vol\nA,1,2\nB,3,4\n".as_bytes(), &ids).unwrap();
        assert_eq!(names, vec!["mom", "vol"]);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 1.0, 2.0]));
        assert!(read_classification("id,label\nA,tech\n".as_bytes(), &ids).is_err());
    }
}
