//! Bounded weighted cross-sectional regression.
//!
//! Combines alpha streams (or stock expected returns) into weights that are
//! neutral to the columns of a loadings matrix, normalized so that
//! `sum |w_i| = 1`, and confined to per-element bounds `w_i^- <= w_i <= w_i^+`.
//!
//! The crate is organised bottom-up:
//!
//! * [`panel`] ingests time-series panels, computes ADDV and selects universes.
//! * [`loadings`] builds covariance matrices and loadings (PCA, classification, styles).
//! * [`regression`] is the unbounded weighted regression and the gamma seed.
//! * [`bounded`] holds the nested bound-membership / gamma iteration.
//! * [`oracle`] is a brute-force reference solver over all activity patterns.
//! * [`portfolio`] converts between weights and dollar holdings and builds bounds.
//! * [`backtest`] runs the intraday mean-reversion protocol on price panels.
//! * [`verify`] compares the solver with the oracle on random instances.

pub mod backtest;
pub mod bounded;
mod csvio;
pub mod error;
pub mod linalg;
pub mod loadings;
pub mod oracle;
pub mod panel;
pub mod portfolio;
pub mod regression;
pub mod verify;

pub use csvio::read_vector;
pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
