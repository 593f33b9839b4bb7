//! Bounded regression: factor-neutral, L1-normalized weights within per-element bounds.

mod bounds;
mod normal;
mod solver;

pub use bounds::{bounds_from_policy, read_bounds, BoundPolicy, BoundSpec};
pub use normal::{restricted_normal_matrix, RestrictedNormal};
pub use solver::{
    bounded_regression, bounded_regression_rebalance, clip_step, kkt_certificate, solve, solve_fixed_gamma,
    solve_rebalance, BoundedSolution, KktReport, SolveState, SolverConfig, DEFAULT_MAX_OUTER, DEFAULT_PREC,
    DEFAULT_TOL,
};
