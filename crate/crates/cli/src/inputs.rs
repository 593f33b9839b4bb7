//! File readers with path context and the `--loadings` specification.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use boundreg_core::loadings::{
    augment_style_columns, classification_loadings, pca_loadings, read_classification, read_covariance, read_styles,
    sample_covariance, CovarianceMatrix, LoadingsMatrix, DEFAULT_EIGEN_TOL,
};
use boundreg_core::panel::load_panel;
use boundreg_core::{read_vector, DMatrix, DVector, Error as CoreError};

use crate::CliError;

pub fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

/// Runs a core reader on `path`, attaching the path to any error.
pub fn read_with<T>(path: &Path, f: impl FnOnce(File) -> Result<T, CoreError>) -> Result<T, CliError> {
    f(open(path)?).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// `id,<value>` file in file order.
pub fn read_keyed_vector(path: &Path) -> Result<(Vec<String>, DVector<f64>), CliError> {
    let (ids, values) = read_with(path, |f| read_vector(f, None))?;
    Ok((ids, DVector::from_vec(values)))
}

/// `id,<value>` file aligned to `ids`.
pub fn read_aligned_vector(path: &Path, ids: &[String]) -> Result<DVector<f64>, CliError> {
    let (_, values) = read_with(path, |f| read_vector(f, Some(ids)))?;
    Ok(DVector::from_vec(values))
}

fn is_panel(path: &Path) -> Result<bool, CliError> {
    let mut first = String::new();
    BufReader::new(open(path)?)
        .read_line(&mut first)
        .map_err(|e| CliError::io(path, e))?;
    Ok(first.trim_start().starts_with('#'))
}

/// A covariance matrix file (`id,<id1>,...`), or a panel file whose sample
/// covariance is taken. Rows and columns follow `ids`.
pub fn read_covariance_source(path: &Path, ids: &[String]) -> Result<CovarianceMatrix, CliError> {
    if !is_panel(path)? {
        return read_with(path, |f| read_covariance(f, ids));
    }
    let panel = read_with(path, load_panel)?;
    let cov = sample_covariance(&panel).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let position = ids
        .iter()
        .map(|id| {
            panel
                .instrument_ids()
                .iter()
                .position(|p| p == id)
                .ok_or_else(|| CliError::File {
                    path: path.to_path_buf(),
                    source: CoreError::MissingId(id.clone()),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if panel.n() != ids.len() {
        return Err(CliError::Usage(format!(
            "{}: panel has {} instruments, expected {}",
            path.display(),
            panel.n(),
            ids.len()
        )));
    }
    let c = cov.values();
    Ok(CovarianceMatrix::new(DMatrix::from_fn(ids.len(), ids.len(), |i, j| {
        c[(position[i], position[j])]
    }))?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadingsSpec {
    Intercept,
    Classification(PathBuf),
    ClassificationPlusStyles(PathBuf, PathBuf),
    /// Covariance or panel file and the relative eigenvalue cut-off.
    Pca(PathBuf, f64),
}

impl FromStr for LoadingsSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once('=') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let need = |what: &str| arg.filter(|a| !a.is_empty()).ok_or_else(|| format!("`{kind}` needs {what}"));
        match kind {
            "intercept" if arg.is_none() => Ok(Self::Intercept),
            "classification" => Ok(Self::Classification(need("a file")?.into())),
            "classification+styles" => match need("two files")?.split_once(',') {
                Some((c, st)) if !c.is_empty() && !st.is_empty() => Ok(Self::ClassificationPlusStyles(c.into(), st.into())),
                _ => Err("expected classification+styles=<classification>,<styles>".into()),
            },
            "pca" => {
                let arg = need("a covariance or panel file")?;
                match arg.split_once(',') {
                    None => Ok(Self::Pca(arg.into(), DEFAULT_EIGEN_TOL)),
                    Some((file, tol)) => {
                        let tol: f64 = tol.parse().map_err(|_| format!("bad eigenvalue tolerance `{tol}`"))?;
                        Ok(Self::Pca(file.into(), tol))
                    }
                }
            }
            _ => Err(format!(
                "unknown loadings `{s}`; expected intercept, classification=<f>, classification+styles=<f>,<f> or pca=<f>,<tol>"
            )),
        }
    }
}

impl LoadingsSpec {
    pub fn build(&self, ids: &[String]) -> Result<LoadingsMatrix, CliError> {
        match self {
            Self::Intercept => Ok(LoadingsMatrix::intercept(ids.len())?),
            Self::Classification(path) => {
                let labels = read_with(path, |f| read_classification(f, ids))?;
                Ok(classification_loadings(&labels)?)
            }
            Self::ClassificationPlusStyles(class, styles) => {
                let labels = read_with(class, |f| read_classification(f, ids))?;
                let (names, values) = read_with(styles, |f| read_styles(f, ids))?;
                Ok(augment_style_columns(&classification_loadings(&labels)?, &values, Some(&names))?)
            }
            Self::Pca(path, tol) => Ok(pca_loadings(&read_covariance_source(path, ids)?, *tol)?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_loadings_specs() {
        assert_eq!("intercept".parse(), Ok(LoadingsSpec::Intercept));
        assert_eq!(
            "classification=a.csv".parse(),
            Ok(LoadingsSpec::Classification("a.csv".into()))
        );
        assert_eq!(
            "classification+styles=a.csv,b.csv".parse(),
            Ok(LoadingsSpec::ClassificationPlusStyles("a.csv".into(), "b.csv".into()))
        );
        assert_eq!("pca=c.csv,1e-8".parse(), Ok(LoadingsSpec::Pca("c.csv".into(), 1e-8)));
        assert_eq!("pca=c.csv".parse(), Ok(LoadingsSpec::Pca("c.csv".into(), DEFAULT_EIGEN_TOL)));
        for bad in ["", "pca", "pca=c.csv,x", "classification", "classification+styles=a.csv", "styles=a", "intercept=x"] {
            assert!(bad.parse::<LoadingsSpec>().is_err(), "{bad}");
        }
    }
}
