//! Solver-versus-oracle comparison on seeded random instances.

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bounded::{bounded_regression, SolverConfig};
use crate::oracle::{oracle_bounded_regression, random_instance};
use crate::Result;

/// Largest tolerated infinity-norm gap between solver and oracle weights.
pub const AGREEMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub instances: usize,
    /// Instances where both sides converged.
    pub compared: usize,
    pub both_failed: usize,
    pub solver_only_failed: usize,
    pub oracle_only_failed: usize,
    pub max_discrepancy: f64,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureKind {
    /// Infinity-norm gap above [`AGREEMENT_TOL`].
    Discrepancy(f64),
    /// The solver failed where the oracle found a solution.
    SolverOnly(String),
    /// The solver returned weights where the oracle found none.
    OracleOnly(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub instance: usize,
    pub kind: FailureKind,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs `count` random instances with `N <= max_n`, `K <= max_k` through both
/// solvers. Both failing is accepted (infeasible or degenerate instance);
/// a one-sided failure or a weight discrepancy is not.
pub fn verify_against_oracle(
    seed: u64,
    count: usize,
    max_n: usize,
    max_k: usize,
    config: &SolverConfig,
) -> Result<VerifyReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerifyReport {
        instances: count,
        ..Default::default()
    };
    for k in 0..count {
        let inst = random_instance(&mut rng, max_n, max_k)?;
        let solver = bounded_regression(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds, config);
        let oracle = oracle_bounded_regression(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds);
        match (solver, oracle) {
            (Ok(w), Ok(wo)) => {
                let d = (w - wo).amax();
                report.compared += 1;
                report.max_discrepancy = report.max_discrepancy.max(d);
                if !(d <= AGREEMENT_TOL) {
                    report.failures.push(Failure {
                        instance: k,
                        kind: FailureKind::Discrepancy(d),
                    });
                }
            }
            (Err(a), Err(b)) => {
                debug!("instance {k}: both failed ({a}; {b})");
                report.both_failed += 1;
            }
            (Err(e), Ok(_)) => {
                report.solver_only_failed += 1;
                report.failures.push(Failure {
                    instance: k,
                    kind: FailureKind::SolverOnly(e.to_string()),
                });
            }
            (Ok(_), Err(e)) => {
                report.oracle_only_failed += 1;
                report.failures.push(Failure {
                    instance: k,
                    kind: FailureKind::OracleOnly(e.to_string()),
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_passes() {
        let r = verify_against_oracle(1, 0, 8, 3, &SolverConfig::default()).unwrap();
        assert!(r.passed());
        assert_eq!(r.compared, 0);
    }

    #[test]
    fn loose_membership_tolerance_is_caught() {
        let cfg = SolverConfig {
            tol: 0.1,
            ..Default::default()
        };
        let r = verify_against_oracle(1, 200, 8, 3, &cfg).unwrap();
        assert!(!r.passed(), "{r:?}");
        assert!(r.solver_only_failed > 0);
    }

    #[test]
    fn small_run_agrees() {
        let r = verify_against_oracle(1, 20, 6, 3, &SolverConfig::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.compared > 10);
    }
}
