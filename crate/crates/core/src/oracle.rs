//! Brute-force reference for the bounded regression.
//!
//! For a fixed gamma the weights minimize `sum_i (w_i - z_i t_i)^2 / z_i`
//! subject to `L^T w = 0` and the bounds, where `t` is the scaled return
//! vector. The oracle enumerates every assignment of the non-fixed elements
//! to {free, at upper, at lower}, solves the equality-constrained system of
//! each pattern with its own Gaussian elimination, keeps the feasible
//! candidates and returns the one with the lowest objective. The gamma scale
//! is then found by bracketed Newton steps on `sum |w| = 1` using the slope
//! of the selected pattern.
//!
//! Nothing here shares code with the iterative solver beyond input types.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bounded::BoundSpec;
use crate::loadings::{augment_style_columns, classification_loadings, LoadingsMatrix};
use crate::regression::{weighted_residuals, RegressionWeights};
use crate::{Error, Result};

pub const MAX_ORACLE_N: usize = 12;
const MAX_GAMMA_ITERATIONS: usize = 200;
/// Gamma is capped at its seed times this factor; still short of `sum |w| = 1` there, the oracle gives up.
const MAX_GAMMA_GROWTH: f64 = 1e8;
const L1_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-12;
const KKT_TOL: f64 = 1e-10;
const NEUTRAL_RTOL: f64 = 1e-10;
const PIVOT_RTOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Activity {
    Free,
    AtUpper,
    AtLower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub weights: DVector<f64>,
    /// Per element; fixed elements are reported as `Free` with weight zero.
    pub active_pattern: Vec<Activity>,
    /// The pinned elements satisfy the one-sided optimality conditions and the
    /// free elements lie within their bounds. `false` when the pattern has no
    /// free element, in which case the multipliers are not determined.
    pub kkt_ok: bool,
    pub objective: f64,
    /// Another pattern with different weights reached the same objective.
    pub tie: bool,
}

/// Partial-pivot Gaussian elimination. `None` when the matrix is numerically singular.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() <= PIVOT_RTOL * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

struct Problem {
    /// Non-fixed element indices.
    active: Vec<usize>,
    n: usize,
    k: usize,
    lam: Vec<Vec<f64>>,
    z: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

struct Candidate {
    weights: Vec<f64>,
    kkt_ok: bool,
    objective: f64,
    /// `d w_i / d gamma` for free elements when `target = gamma * alpha`.
    slope_basis: Option<Vec<f64>>,
}

impl Problem {
    fn new(loadings: &LoadingsMatrix, z: &RegressionWeights, bounds: &BoundSpec) -> Result<Self> {
        let n = loadings.n();
        if z.len() != n || bounds.len() != n {
            return Err(Error::DimensionMismatch {
                what: "oracle inputs",
                expected: n,
                actual: z.len().min(bounds.len()),
            });
        }
        let active: Vec<usize> = (0..n).filter(|&i| !bounds.is_fixed(i)).collect();
        if active.len() > MAX_ORACLE_N {
            return Err(Error::InvalidInput(format!(
                "oracle enumeration supports at most {MAX_ORACLE_N} free elements, got {}",
                active.len()
            )));
        }
        let l = loadings.values();
        Ok(Self {
            n,
            k: l.ncols(),
            lam: (0..n).map(|i| (0..l.ncols()).map(|a| l[(i, a)]).collect()).collect(),
            z: z.as_vector().iter().copied().collect(),
            lower: bounds.lower().iter().copied().collect(),
            upper: bounds.upper().iter().copied().collect(),
            active,
        })
    }

    fn neutral(&self, w: &[f64]) -> bool {
        (0..self.k).all(|a| {
            let (mut s, mut scale) = (0.0, 0.0);
            for i in 0..self.n {
                s += w[i] * self.lam[i][a];
                scale += (w[i] * self.lam[i][a]).abs();
            }
            s.abs() <= NEUTRAL_RTOL * scale.max(f64::MIN_POSITIVE)
        })
    }

    fn objective(&self, w: &[f64], target: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| (w[i] - self.z[i] * target[i]).powi(2) / self.z[i])
            .sum()
    }

    /// Solves one activity pattern. `None` when the pattern is singular or infeasible.
    fn evaluate(&self, pattern: &[Activity], target: &[f64], alpha: Option<&[f64]>) -> Option<Candidate> {
        let mut w = vec![0.0; self.n];
        let mut free = Vec::new();
        for (&i, p) in self.active.iter().zip(pattern) {
            match p {
                Activity::AtUpper => w[i] = self.upper[i],
                Activity::AtLower => w[i] = self.lower[i],
                Activity::Free => free.push(i),
            }
        }
        if free.is_empty() {
            return self.neutral(&w).then(|| Candidate {
                objective: self.objective(&w, target),
                weights: w,
                kkt_ok: false,
                slope_basis: None,
            });
        }

        let kept: Vec<usize> = (0..self.k).filter(|&a| free.iter().any(|&i| self.lam[i][a] != 0.0)).collect();
        let mut y = vec![0.0; self.k];
        for i in 0..self.n {
            let c = if free.contains(&i) { self.z[i] * target[i] } else { w[i] };
            for (a, ya) in y.iter_mut().enumerate() {
                *ya += c * self.lam[i][a];
            }
        }
        // Columns that vanish on the free set must already balance on the pinned set.
        let dropped_ok = (0..self.k).filter(|a| !kept.contains(a)).all(|a| {
            let scale: f64 = (0..self.n).map(|i| (w[i] * self.lam[i][a]).abs()).sum();
            y[a].abs() <= NEUTRAL_RTOL * scale.max(f64::MIN_POSITIVE)
        });
        if !dropped_ok {
            return None;
        }
        let q: Vec<Vec<f64>> = kept
            .iter()
            .map(|&a| {
                kept.iter()
                    .map(|&b| free.iter().map(|&i| self.z[i] * self.lam[i][a] * self.lam[i][b]).sum())
                    .collect()
            })
            .collect();
        let rhs: Vec<f64> = kept.iter().map(|&a| y[a]).collect();
        let v = gauss_solve(q.clone(), rhs)?;
        let value = |i: usize, t: &[f64], v: &[f64]| -> f64 {
            let fitted: f64 = kept.iter().zip(v).map(|(&a, va)| self.lam[i][a] * va).sum();
            self.z[i] * (t[i] - fitted)
        };

        let mut kkt_ok = true;
        for (&i, p) in self.active.iter().zip(pattern) {
            let f = value(i, target, &v);
            match p {
                Activity::Free => {
                    if f < self.lower[i] - FEAS_TOL || f > self.upper[i] + FEAS_TOL {
                        return None;
                    }
                    w[i] = f;
                }
                Activity::AtUpper => kkt_ok &= f >= self.upper[i] - KKT_TOL,
                Activity::AtLower => kkt_ok &= f <= self.lower[i] + KKT_TOL,
            }
        }

        let slope_basis = alpha.and_then(|alpha| {
            let mut b = vec![0.0; kept.len()];
            for &i in &free {
                for (r, &a) in kept.iter().enumerate() {
                    b[r] += self.z[i] * alpha[i] * self.lam[i][a];
                }
            }
            let u = gauss_solve(q, b)?;
            let mut slope = vec![0.0; self.n];
            for &i in &free {
                slope[i] = value(i, alpha, &u);
            }
            Some(slope)
        });

        Some(Candidate {
            objective: self.objective(&w, target),
            weights: w,
            kkt_ok,
            slope_basis,
        })
    }

    fn enumerate(&self, target: &[f64], alpha: Option<&[f64]>) -> Result<(OracleSolution, Option<Vec<f64>>)> {
        let m = self.active.len();
        let total = 3usize.pow(m as u32);
        let mut pattern = vec![Activity::Free; m];
        let mut best: Option<(Candidate, Vec<Activity>, bool)> = None;
        for code in 0..total {
            let mut c = code;
            for p in pattern.iter_mut() {
                *p = match c % 3 {
                    0 => Activity::Free,
                    1 => Activity::AtUpper,
                    _ => Activity::AtLower,
                };
                c /= 3;
            }
            let Some(cand) = self.evaluate(&pattern, target, alpha) else {
                continue;
            };
            match &mut best {
                None => best = Some((cand, pattern.clone(), false)),
                Some((b, bp, tie)) => {
                    let slack = 1e-13 * (1.0 + b.objective.abs());
                    if cand.objective < b.objective - slack {
                        *b = cand;
                        *bp = pattern.clone();
                        *tie = false;
                    } else if cand.objective <= b.objective + slack {
                        let differs = cand.weights.iter().zip(&b.weights).any(|(x, y)| (x - y).abs() > 1e-12);
                        if differs {
                            *tie = true;
                        } else if cand.kkt_ok && !b.kkt_ok {
                            // Same point; prefer the pattern that certifies it.
                            *b = cand;
                            *bp = pattern.clone();
                        }
                    }
                }
            }
        }
        let (cand, pat, tie) = best.ok_or(Error::OracleNoPattern)?;
        let mut active_pattern = vec![Activity::Free; self.n];
        for (&i, p) in self.active.iter().zip(&pat) {
            active_pattern[i] = *p;
        }
        Ok((
            OracleSolution {
                weights: DVector::from_vec(cand.weights),
                active_pattern,
                kkt_ok: cand.kkt_ok,
                objective: cand.objective,
                tie,
            },
            cand.slope_basis,
        ))
    }
}

/// Exhaustive fixed-gamma solution for the scaled returns `alpha_tilde`.
pub fn oracle_fixed_gamma(
    alpha_tilde: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
    bounds: &BoundSpec,
) -> Result<OracleSolution> {
    let problem = Problem::new(loadings, z, bounds)?;
    let target: Vec<f64> = alpha_tilde.iter().copied().collect();
    problem.enumerate(&target, None).map(|(s, _)| s)
}

/// Exhaustive bounded regression: `sum |w| = 1` to `1e-12`.
pub fn oracle_bounded_regression(
    alpha: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
    bounds: &BoundSpec,
) -> Result<DVector<f64>> {
    let problem = Problem::new(loadings, z, bounds)?;
    let reg = weighted_residuals(alpha, loadings, z)?;
    let seed: f64 = reg.residuals.iter().zip(z.as_vector().iter()).map(|(e, z)| z * e.abs()).sum();
    if !(seed > 0.0) {
        return Err(Error::ZeroResiduals);
    }
    let alpha: Vec<f64> = alpha.iter().copied().collect();
    let mut gamma = 1.0 / seed;
    let cap = MAX_GAMMA_GROWTH / seed;
    // Safeguarded Newton on the continuous map gamma -> sum |w(gamma)|:
    // `lo` / `hi` bracket the root once found, bisection otherwise.
    let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
    let mut last_l1 = f64::NAN;
    for _ in 0..MAX_GAMMA_ITERATIONS {
        let target: Vec<f64> = alpha.iter().map(|a| gamma * a).collect();
        let (sol, slope_basis) = problem.enumerate(&target, Some(&alpha))?;
        let l1: f64 = sol.weights.iter().map(|w| w.abs()).sum();
        last_l1 = l1;
        if (l1 - 1.0).abs() <= L1_TOL {
            return Ok(sol.weights);
        }
        if l1 < 1.0 && hi.is_none() && gamma >= cap {
            break;
        }
        if l1 < 1.0 {
            lo = Some(gamma);
        } else {
            hi = Some(gamma);
        }
        let slope: f64 = slope_basis
            .map(|u| {
                sol.weights
                    .iter()
                    .zip(&u)
                    .zip(&sol.active_pattern)
                    .filter(|(_, p)| **p == Activity::Free)
                    .map(|((w, u), _)| if *w == 0.0 { u.abs() } else { w.signum() * u })
                    .sum()
            })
            .unwrap_or(0.0);
        let newton = (slope > 0.0).then(|| gamma + (1.0 - l1) / slope).filter(|g| g.is_finite());
        // Without a bracket a step may at most double or halve gamma.
        let inside = |g: f64| {
            lo.is_none_or(|l| g > l)
                && hi.is_none_or(|h| g < h)
                && (lo.is_some() && hi.is_some() || (g >= 0.5 * gamma && g <= 2.0 * gamma))
        };
        gamma = match (newton.filter(|g| inside(*g)), lo, hi) {
            (Some(g), _, _) => g,
            (None, Some(l), Some(h)) => 0.5 * (l + h),
            (None, _, None) => gamma * 2.0,
            (None, None, Some(_)) => gamma * 0.5,
        }
        .min(cap);
    }
    Err(Error::NormalizationInfeasible {
        iterations: MAX_GAMMA_ITERATIONS,
        gamma,
        l1: last_l1,
    })
}

/// One randomized test problem.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub alpha: DVector<f64>,
    pub loadings: LoadingsMatrix,
    pub z: RegressionWeights,
    pub bounds: BoundSpec,
}

/// Draws `N <= max_n` elements with `K <= max_k` loadings columns: either an
/// intercept, or a random binary classification plus one normal style column.
/// `z ~ U(0.5, 2)`, `alpha ~ N(0, 1)`, `w^+ ~ U(0.1, 1)`, `w^- ~ -U(0.1, 1)`.
pub fn random_instance<R: Rng>(rng: &mut R, max_n: usize, max_k: usize) -> Result<RandomInstance> {
    if !(2..=MAX_ORACLE_N).contains(&max_n) || max_k == 0 {
        return Err(Error::InvalidInput(format!(
            "instance caps must satisfy 2 <= max_n <= {MAX_ORACLE_N} and max_k >= 1"
        )));
    }
    let n = rng.random_range(max_n.min(4)..=max_n);
    let use_styles = max_k >= 2 && rng.random_bool(2.0 / 3.0);
    let loadings = if use_styles {
        let categories = rng.random_range(1..=(max_k - 1).min(n / 2).max(1));
        let mut labels: Vec<usize> = (0..n).map(|i| if i < 2 * categories { i % categories } else { rng.random_range(0..categories) }).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let names: Vec<String> = labels.iter().map(|c| format!("c{c}")).collect();
        let base = classification_loadings(&names)?;
        let style = DMatrix::from_fn(n, 1, |_, _| StandardNormal.sample(rng));
        augment_style_columns(&base, &style, None)?
    } else {
        LoadingsMatrix::intercept(n)?
    };
    let z = RegressionWeights::new(DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0)))?;
    let alpha = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let upper = DVector::from_fn(n, |_, _| rng.random_range(0.1..1.0));
    let lower = DVector::from_fn(n, |_, _| -rng.random_range(0.1..1.0));
    Ok(RandomInstance {
        alpha,
        loadings,
        z,
        bounds: BoundSpec::new(lower, upper)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::unbounded_weights;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn gauss_solves_and_detects_singularity() {
        let x = gauss_solve(vec![vec![0.0, 2.0], vec![1.0, 1.0]], vec![4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(gauss_solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn canonical_fixed_gamma() {
        let l = LoadingsMatrix::intercept(4).unwrap();
        let sol = oracle_fixed_gamma(
            &v(&[0.8, 0.2, -0.2, -0.8]),
            &l,
            &RegressionWeights::ones(4),
            &BoundSpec::symmetric(4, 0.3),
        )
        .unwrap();
        assert!((&sol.weights - v(&[0.3, 0.2, -0.2, -0.3])).amax() < 1e-14);
        assert_eq!(
            sol.active_pattern,
            vec![Activity::AtUpper, Activity::Free, Activity::Free, Activity::AtLower]
        );
        assert!(sol.kkt_ok);
        assert!(!sol.tie);
    }

    #[test]
    fn non_binding_bounds_all_free() {
        let l = LoadingsMatrix::intercept(3).unwrap();
        let z = RegressionWeights::new(v(&[1.0, 2.0, 0.5])).unwrap();
        let t = v(&[0.1, -0.05, 0.2]);
        let sol = oracle_fixed_gamma(&t, &l, &z, &BoundSpec::unbounded(3)).unwrap();
        assert!(sol.active_pattern.iter().all(|p| *p == Activity::Free));
        let eps = weighted_residuals(&t, &l, &z).unwrap().residuals;
        assert!((sol.weights - eps.component_mul(z.as_vector())).amax() < 1e-15);
    }

    #[test]
    fn infeasible_pair_pins_both() {
        let l = LoadingsMatrix::intercept(2).unwrap();
        let b = BoundSpec::symmetric(2, 0.4);
        let sol = oracle_fixed_gamma(&v(&[0.5, 1.5]), &l, &RegressionWeights::ones(2), &b).unwrap();
        assert!((&sol.weights - v(&[-0.4, 0.4])).amax() < 1e-15);
        assert!(sol.kkt_ok);
        let err = oracle_bounded_regression(&v(&[1.0, 3.0]), &l, &RegressionWeights::ones(2), &b).unwrap_err();
        assert!(matches!(err, Error::NormalizationInfeasible { .. }));
    }

    #[test]
    fn canonical_bounded() {
        let l = LoadingsMatrix::intercept(4).unwrap();
        let w = oracle_bounded_regression(
            &v(&[4.0, 1.0, -1.0, -4.0]),
            &l,
            &RegressionWeights::ones(4),
            &BoundSpec::symmetric(4, 0.3),
        )
        .unwrap();
        assert!((w - v(&[0.3, 0.2, -0.2, -0.3])).amax() < 1e-12);
    }

    #[test]
    fn unbounded_limit_matches_regression() {
        let l = LoadingsMatrix::intercept(5).unwrap();
        let z = RegressionWeights::new(v(&[1.0, 0.7, 1.3, 2.0, 0.6])).unwrap();
        let a = v(&[0.3, -1.1, 0.4, 2.2, -0.9]);
        let w = oracle_bounded_regression(&a, &l, &z, &BoundSpec::unbounded(5)).unwrap();
        assert!((w - unbounded_weights(&a, &l, &z).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn rejects_large_problems() {
        let l = LoadingsMatrix::intercept(13).unwrap();
        let err = oracle_fixed_gamma(&DVector::zeros(13), &l, &RegressionWeights::ones(13), &BoundSpec::unbounded(13));
        assert!(err.is_err());
    }
}
