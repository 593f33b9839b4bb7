use thiserror::Error;

use crate::bounded::SolveState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("missing value for instrument `{row}` at column `{column}`")]
    MissingCell { row: String, column: String },

    #[error("duplicate instrument id `{0}`")]
    DuplicateId(String),

    #[error("unknown instrument id `{0}`")]
    UnknownId(String),

    #[error("instrument `{0}` missing from input file")]
    MissingId(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient history: need {needed} observations, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("instrument `{0}` has zero sample variance")]
    ZeroVariance(String),

    #[error("no eigenvalue above the relative threshold {threshold:e}")]
    NoPositiveEigenvalues { threshold: f64 },

    #[error("style column {0} is identically zero")]
    ZeroColumn(usize),

    #[error("normal matrix is singular or ill-conditioned (reciprocal condition estimate {rcond:e})")]
    SingularMatrix { rcond: f64 },

    #[error("all regression residuals vanish; there is no direction to allocate")]
    ZeroResiduals,

    #[error("invalid bounds at element {index}: lower {lower}, upper {upper}")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },

    #[error("prior weights are not factor neutral (relative residual {residual:e})")]
    NonNeutralPrior { residual: f64 },

    #[error("prior holdings exceed the position cap at elements {0:?}")]
    PriorExceedsCap(Vec<usize>),

    #[error("weights violate the L1 normalization (sum |w| = {sum})")]
    NormalizationViolated { sum: f64 },

    #[error("bound membership iteration did not converge in {} steps", state.inner_iterations)]
    InnerNonConvergence { state: Box<SolveState> },

    #[error("free set is empty and the pinned weights are not factor neutral (residual {residual:e})")]
    EmptyFreeSet { residual: f64 },

    #[error("normalization infeasible under bounds: sum |w| = {l1} after {iterations} gamma iterations")]
    NormalizationInfeasible {
        iterations: usize,
        gamma: f64,
        l1: f64,
    },

    #[error("oracle found no admissible activity pattern")]
    OracleNoPattern,
}

impl Error {
    /// True for failures of the iterative solver itself, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::InnerNonConvergence { .. }
                | Error::EmptyFreeSet { .. }
                | Error::NormalizationInfeasible { .. }
                | Error::SingularMatrix { .. }
                | Error::ZeroResiduals
                | Error::OracleNoPattern
        )
    }
}
