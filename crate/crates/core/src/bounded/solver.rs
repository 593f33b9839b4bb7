//! The nested bound-membership / gamma iteration.
//!
//! For a fixed scale `gamma` the inner loop keeps a feasible, factor-neutral
//! iterate `w_hat` (starting at zero) and repeatedly
//!
//! 1. solves for the candidate `x` with the current `J+` / `J-` members
//!    pinned at their bounds and the free elements given by the restricted
//!    regression,
//! 2. moves `w_hat` towards `x` as far as the bound box allows,
//! 3. re-derives `J+` / `J-` from which elements of `w_hat` sit on a bound,
//!
//! until the membership sets stop changing. A settled iterate whose pinned
//! elements would rather move inside the box (the regression value lies on
//! the feasible side of the bound) releases the worst such element and the
//! iteration continues. The outer loop rescales
//! `gamma <- gamma / sum |w~|` from the regression seed until the L1
//! normalization holds to `prec`, then refines `gamma` by a secant step
//! within the final activity pattern.
//!
//! `sum |w~|` is piecewise affine in gamma and need not be monotone: it is
//! constant while the pinned elements fix every free one through neutrality
//! and can fall where a free element changes sign. The rescaling alone can
//! then stall for hundreds of iterations, so the outer loop takes secant
//! steps within an activity pattern, doubles gamma across flat or falling
//! pieces below the target, and once iterates lie on both sides of the
//! target bisects that bracket geometrically whenever no secant step falls
//! inside it. Gamma is capped at `1e8` times its seed.

use nalgebra::{DMatrix, DVector};

use super::bounds::BoundSpec;
use super::normal::RestrictedNormal;
use crate::linalg::{l1_norm, neutrality_residual, neutrality_scale};
use crate::loadings::LoadingsMatrix;
use crate::regression::{check_dims, residuals_and_seed, RegressionWeights};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_PREC: f64 = 1e-5;
pub const DEFAULT_MAX_OUTER: usize = 100;

/// Relative neutrality tolerance for a candidate whose free set is empty.
const EMPTY_FREE_RTOL: f64 = 1e-9;
/// Relative neutrality tolerance for prior weights in a rebalance.
const PRIOR_NEUTRALITY_RTOL: f64 = 1e-8;
const MAX_POLISH: usize = 8;
const POLISH_TOL: f64 = 1e-14;
/// Relative slack before a pinned element counts as violating its sign condition.
const KKT_RTOL: f64 = 1e-10;
/// Relative change of `sum |w~|` per relative change of gamma below which a piece counts as flat.
const PLATEAU_RTOL: f64 = 1e-12;
/// Gamma never exceeds this multiple of its seed. Beyond it the weights are
/// differences of terms this much larger than themselves and carry that much
/// more rounding, so the normalization is reported infeasible instead.
const MAX_GAMMA_GROWTH: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Bound-membership tolerance `|w_hat - w^±| < tol`.
    pub tol: f64,
    /// Stop the gamma loop once `|sum |w~| - 1| < prec`.
    pub prec: f64,
    /// Inner iteration cap; `None` means `4 N`.
    pub max_inner: Option<usize>,
    pub max_outer: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            prec: DEFAULT_PREC,
            max_inner: None,
            max_outer: DEFAULT_MAX_OUTER,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tol > 0.0
            && self.prec > 0.0
            && self.max_outer > 0
            && self.max_inner.is_none_or(|m| m > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("solver configuration must be positive: {self:?}")))
        }
    }

    fn inner_cap(&self, n: usize) -> usize {
        self.max_inner.unwrap_or(4 * n).max(1)
    }
}

/// Where the iteration stopped. Index sets refer to the full instrument list.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    pub j_plus: Vec<usize>,
    pub j_minus: Vec<usize>,
    pub w_hat: DVector<f64>,
    /// Scale applied to the input returns (1 for [`solve_fixed_gamma`]).
    pub gamma: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}

impl SolveState {
    /// Elements that are neither pinned nor fixed by equal bounds.
    pub fn free_set(&self, bounds: &BoundSpec) -> Vec<usize> {
        (0..self.w_hat.len())
            .filter(|&i| !bounds.is_fixed(i) && !self.j_plus.contains(&i) && !self.j_minus.contains(&i))
            .collect()
    }
}

/// Moves `w_hat` towards `x` by the largest `t` in `[0, 1]` keeping every
/// element within its bounds. Returns the new point and `t*` (`None` when
/// `x == w_hat` and nothing moves).
pub fn clip_step(w_hat: &DVector<f64>, x: &DVector<f64>, bounds: &BoundSpec) -> (DVector<f64>, Option<f64>) {
    clip_raw(w_hat, x, bounds.lower(), bounds.upper())
}

fn clip_raw(
    w_hat: &DVector<f64>,
    x: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> (DVector<f64>, Option<f64>) {
    let q = x - w_hat;
    let mut t_star: Option<f64> = None;
    for i in 0..q.len() {
        let p = if q[i] > 0.0 {
            x[i].min(upper[i])
        } else if q[i] < 0.0 {
            x[i].max(lower[i])
        } else {
            continue;
        };
        let t = (p - w_hat[i]) / q[i];
        t_star = Some(t_star.map_or(t, |s| s.min(t)));
    }
    match t_star {
        None => (w_hat.clone(), None),
        Some(t) => {
            let t = t.clamp(0.0, 1.0);
            (w_hat + q * t, Some(t))
        }
    }
}

/// The problem restricted to elements whose bounds differ.
struct Reduced {
    active: Vec<usize>,
    n_full: usize,
    lam: DMatrix<f64>,
    z: DVector<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl Reduced {
    fn new(loadings: &LoadingsMatrix, z: &RegressionWeights, bounds: &BoundSpec) -> Result<Self> {
        let n_full = loadings.n();
        if bounds.len() != n_full {
            return Err(Error::DimensionMismatch {
                what: "bounds",
                expected: n_full,
                actual: bounds.len(),
            });
        }
        let active: Vec<usize> = (0..n_full).filter(|&i| !bounds.is_fixed(i)).collect();
        if active.is_empty() {
            return Err(Error::InvalidInput("every element is fixed by equal bounds".into()));
        }
        let pick = |v: &DVector<f64>| DVector::from_iterator(active.len(), active.iter().map(|&i| v[i]));
        Ok(Self {
            lam: loadings.values().select_rows(&active),
            z: pick(z.as_vector()),
            lower: pick(bounds.lower()),
            upper: pick(bounds.upper()),
            active,
            n_full,
        })
    }

    fn len(&self) -> usize {
        self.active.len()
    }

    fn pick(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.active.iter().map(|&i| v[i]))
    }

    fn expand(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.n_full);
        for (k, &i) in self.active.iter().enumerate() {
            full[i] = v[k];
        }
        full
    }

    fn expand_set(&self, mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(k, _)| self.active[k])
            .collect()
    }

    /// Bound membership of `w` within `tol`; an element near both bounds joins the closer one.
    fn membership(&self, w: &DVector<f64>, tol: f64) -> (Vec<bool>, Vec<bool>) {
        let mut jp = vec![false; self.len()];
        let mut jm = vec![false; self.len()];
        for i in 0..self.len() {
            let du = (w[i] - self.upper[i]).abs();
            let dl = (w[i] - self.lower[i]).abs();
            if du < tol && du <= dl {
                jp[i] = true;
            } else if dl < tol {
                jm[i] = true;
            }
        }
        (jp, jm)
    }

    /// Candidate `x`: pinned members at their bounds, free elements from the
    /// restricted regression against `target` (the scaled returns).
    ///
    /// Also returns the regression value `z_i (t_i - L_i v)` of every element,
    /// pinned ones included, or `None` when nothing is free.
    fn candidate(
        &self,
        target: &DVector<f64>,
        jp: &[bool],
        jm: &[bool],
    ) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
        let n = self.len();
        let free: Vec<usize> = (0..n).filter(|&i| !jp[i] && !jm[i]).collect();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            if jp[i] {
                x[i] = self.upper[i];
            } else if jm[i] {
                x[i] = self.lower[i];
            }
        }
        if free.is_empty() {
            let residual = neutrality_residual(&x, &self.lam);
            let scale = neutrality_scale(&x, &self.lam);
            if residual > EMPTY_FREE_RTOL * scale {
                return Err(Error::EmptyFreeSet { residual });
            }
            return Ok((x, None));
        }
        let k = self.lam.ncols();
        let mut y = DVector::zeros(k);
        for i in 0..n {
            let c = if jp[i] || jm[i] { x[i] } else { self.z[i] * target[i] };
            for a in 0..k {
                y[a] += c * self.lam[(i, a)];
            }
        }
        let normal = RestrictedNormal::build(&self.lam, &self.z, &free)?;
        let v = normal.solve_full(&y);
        let values = DVector::from_fn(n, |i, _| {
            let fitted: f64 = normal
                .kept_columns
                .iter()
                .zip(v.iter())
                .map(|(&a, va)| self.lam[(i, a)] * va)
                .sum();
            self.z[i] * (target[i] - fitted)
        });
        for &i in &free {
            x[i] = values[i];
        }
        Ok((x, Some(values)))
    }

    /// The pinned element whose regression value lies furthest on the
    /// feasible side of its bound, i.e. the worst violation of the one-sided
    /// optimality conditions. Returns the index and whether it sits on the upper bound.
    fn worst_violator(&self, values: &DVector<f64>, jp: &[bool], jm: &[bool], scale: f64) -> Option<(usize, bool)> {
        let threshold = KKT_RTOL * scale;
        let mut worst: Option<(usize, bool, f64)> = None;
        for i in 0..self.len() {
            let gap = if jp[i] {
                self.upper[i] - values[i]
            } else if jm[i] {
                values[i] - self.lower[i]
            } else {
                continue;
            };
            if gap > threshold && worst.is_none_or(|(_, _, g)| gap > g) {
                worst = Some((i, jp[i], gap));
            }
        }
        worst.map(|(i, up, _)| (i, up))
    }
}

struct Inner {
    w: DVector<f64>,
    jp: Vec<bool>,
    jm: Vec<bool>,
    iterations: usize,
}

fn inner_loop(red: &Reduced, target: &DVector<f64>, tol: f64, max_inner: usize) -> Result<Inner> {
    let n = red.len();
    let mut w_hat = DVector::zeros(n);
    let mut jp = vec![false; n];
    let mut jm = vec![false; n];
    // Released elements stay off the bound they left until the candidate
    // pushes past it again: `Some(true)` for the upper bound.
    let mut held: Vec<Option<bool>> = vec![None; n];
    let scale = target.component_mul(&red.z).amax().max(red.upper.amax()).max(f64::MIN_POSITIVE);
    for iteration in 1..=max_inner {
        let (x, values) = red.candidate(target, &jp, &jm)?;
        let (next, _) = clip_raw(&w_hat, &x, &red.lower, &red.upper);
        let (mut np, mut nm) = red.membership(&next, tol);
        for i in 0..n {
            match held[i] {
                Some(true) if x[i] < red.upper[i] => np[i] = false,
                Some(false) if x[i] > red.lower[i] => nm[i] = false,
                Some(_) => held[i] = None,
                None => {}
            }
            if held[i].is_some() && (next[i] - red.upper[i]).abs() >= tol && (next[i] - red.lower[i]).abs() >= tol {
                held[i] = None;
            }
        }
        w_hat = next;
        let mut settled = np == jp && nm == jm;
        if settled {
            if let Some((i, up)) = values.as_ref().and_then(|v| red.worst_violator(v, &np, &nm, scale)) {
                np[i] = false;
                nm[i] = false;
                held[i] = Some(up);
                settled = false;
            }
        }
        jp = np;
        jm = nm;
        if settled {
            return Ok(Inner {
                w: w_hat,
                jp,
                jm,
                iterations: iteration,
            });
        }
    }
    Err(Error::InnerNonConvergence {
        state: Box::new(SolveState {
            j_plus: red.expand_set(&jp),
            j_minus: red.expand_set(&jm),
            w_hat: red.expand(&w_hat),
            gamma: f64::NAN,
            inner_iterations: max_inner,
            outer_iterations: 0,
        }),
    })
}

/// Fixed-gamma solve for the scaled returns `alpha_tilde`.
///
/// Returns `w~` and the final membership state.
pub fn solve_fixed_gamma(
    alpha_tilde: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
    bounds: &BoundSpec,
    config: &SolverConfig,
) -> Result<(DVector<f64>, SolveState)> {
    check_dims(alpha_tilde, loadings, z)?;
    config.validate()?;
    let red = Reduced::new(loadings, z, bounds)?;
    let target = red.pick(alpha_tilde);
    let inner = inner_loop(&red, &target, config.tol, config.inner_cap(red.n_full))?;
    let w = red.expand(&inner.w);
    let state = SolveState {
        j_plus: red.expand_set(&inner.jp),
        j_minus: red.expand_set(&inner.jm),
        w_hat: w.clone(),
        gamma: 1.0,
        inner_iterations: inner.iterations,
        outer_iterations: 0,
    };
    Ok((w, state))
}

/// Full output of a bounded solve.
#[derive(Debug, Clone)]
pub struct BoundedSolution {
    /// Final weights `w` (holdings fractions).
    pub weights: DVector<f64>,
    /// Final trades `x = w - w*`; equal to `weights` without a prior.
    pub trades: DVector<f64>,
    /// Membership state of the trades at the final gamma.
    pub state: SolveState,
    /// `sum |w|`.
    pub l1: f64,
    /// Target of the final fixed-gamma problem, `gamma alpha - w*/z`.
    pub target: DVector<f64>,
}

#[derive(Clone)]
struct Evaluation {
    gamma: f64,
    trades: DVector<f64>,
    weights: DVector<f64>,
    l1: f64,
    jp: Vec<bool>,
    jm: Vec<bool>,
    signs: Vec<i8>,
    inner_iterations: usize,
}

impl Evaluation {
    fn same_pattern(&self, other: &Evaluation) -> bool {
        self.jp == other.jp && self.jm == other.jm && self.signs == other.signs
    }

    fn gap(&self) -> f64 {
        (self.l1 - 1.0).abs()
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn run(
    alpha: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
    bounds: &BoundSpec,
    prior: Option<&DVector<f64>>,
    config: &SolverConfig,
) -> Result<BoundedSolution> {
    check_dims(alpha, loadings, z)?;
    config.validate()?;
    let red = Reduced::new(loadings, z, bounds)?;
    let (_, gamma_seed) = residuals_and_seed(alpha, loadings, z)?;
    let max_inner = config.inner_cap(red.n_full);

    let alpha_red = red.pick(alpha);
    let shift = prior.map(|p| red.pick(p).component_div(&red.z));
    let target_at = |gamma: f64| -> DVector<f64> {
        let scaled = &alpha_red * gamma;
        match &shift {
            Some(s) => scaled - s,
            None => scaled,
        }
    };
    let evaluate = |gamma: f64| -> Result<Evaluation> {
        let inner = inner_loop(&red, &target_at(gamma), config.tol, max_inner)?;
        let trades = red.expand(&inner.w);
        let weights = match prior {
            Some(p) => &trades + p,
            None => trades.clone(),
        };
        let signs = (0..red.len())
            .map(|k| if inner.jp[k] || inner.jm[k] { 0 } else { sign(inner.w[k]) })
            .collect();
        Ok(Evaluation {
            gamma,
            l1: l1_norm(&weights),
            trades,
            weights,
            jp: inner.jp,
            jm: inner.jm,
            signs,
            inner_iterations: inner.iterations,
        })
    };

    let finish = |best: Evaluation, outer: usize| -> BoundedSolution {
        let state = SolveState {
            j_plus: red.expand_set(&best.jp),
            j_minus: red.expand_set(&best.jm),
            w_hat: best.trades.clone(),
            gamma: best.gamma,
            inner_iterations: best.inner_iterations,
            outer_iterations: outer,
        };
        let mut target = DVector::zeros(red.n_full);
        for (k, &i) in red.active.iter().enumerate() {
            target[i] = target_at(best.gamma)[k];
        }
        BoundedSolution {
            weights: best.weights,
            trades: best.trades,
            state,
            l1: best.l1,
            target,
        }
    };

    let gamma_cap = MAX_GAMMA_GROWTH * gamma_seed;
    let mut gamma = gamma_seed;
    let mut previous: Option<Evaluation> = None;
    let mut before: Option<Evaluation> = None;
    // Latest gammas with `sum |w~|` below and above 1.
    let (mut below, mut above): (Option<f64>, Option<f64>) = (None, None);
    for outer in 1..=config.max_outer {
        let current = evaluate(gamma)?;
        if current.gap() < config.prec {
            return Ok(finish(polish(current, previous, &evaluate), outer));
        }
        if !(current.l1 > 0.0) {
            return Err(Error::NormalizationInfeasible {
                iterations: outer,
                gamma,
                l1: current.l1,
            });
        }
        if current.l1 < 1.0 {
            below = Some(gamma);
        } else {
            above = Some(gamma);
        }
        let bracket = below.zip(above).map(|(lo, hi)| (lo.min(hi), lo.max(hi)));
        if bracket.is_none() && current.l1 < 1.0 && gamma >= gamma_cap {
            return Err(Error::NormalizationInfeasible {
                iterations: outer,
                gamma,
                l1: current.l1,
            });
        }
        let next = next_gamma(&current, previous.as_ref(), bracket).min(gamma_cap);
        gamma = next;
        before = previous.replace(current);
    }
    // The rescaling contracts slowly when most of the mass is pinned; a
    // secant step through the last two iterates may still reach the target.
    let last = previous.expect("max_outer is positive");
    let last_l1 = last.l1;
    let best = polish(last, before, &evaluate);
    if best.gap() < config.prec {
        return Ok(finish(best, config.max_outer));
    }
    Err(Error::NormalizationInfeasible {
        iterations: config.max_outer,
        gamma,
        l1: last_l1,
    })
}

/// Proposes the next gamma. Within one activity pattern `sum |w~|` is affine
/// in gamma, so two evaluations sharing a pattern give a secant step. Before
/// the target is bracketed, a piece that is flat or slopes the wrong way is
/// stepped over by doubling gamma (or halving it from above); otherwise the
/// plain rescaling `gamma / sum |w~|` applies. Once bracketed, any step that
/// is not a secant inside the bracket becomes its geometric midpoint.
fn next_gamma(current: &Evaluation, previous: Option<&Evaluation>, bracket: Option<(f64, f64)>) -> f64 {
    let slope = previous
        .filter(|p| p.same_pattern(current) && p.gamma != current.gamma)
        .map(|p| (current.l1 - p.l1) / (current.gamma - p.gamma));
    let secant = slope
        .filter(|m| m.abs() * current.gamma > PLATEAU_RTOL * current.l1)
        .map(|m| current.gamma + (1.0 - current.l1) / m)
        .filter(|g| g.is_finite() && *g > 0.0);
    if let Some((a, b)) = bracket {
        return match secant {
            Some(g) if g > a && g < b => g,
            _ => (a * b).sqrt(),
        };
    }
    match (slope, secant) {
        (None, _) => current.gamma / current.l1,
        (Some(m), Some(g)) if m > 0.0 => g,
        _ if current.l1 < 1.0 => 2.0 * current.gamma,
        _ => 0.5 * current.gamma,
    }
}

/// Refines gamma once the normalization holds to `prec`. Within a fixed
/// activity pattern `sum |w~|` is affine in gamma, so a secant step through
/// the last two evaluations lands on the root; otherwise fall back to the
/// plain rescaling. Only strict improvements are kept.
fn polish<F>(mut best: Evaluation, mut previous: Option<Evaluation>, evaluate: &F) -> Evaluation
where
    F: Fn(f64) -> Result<Evaluation>,
{
    for _ in 0..MAX_POLISH {
        if best.gap() <= POLISH_TOL {
            break;
        }
        let next_gamma = match &previous {
            Some(p) if p.same_pattern(&best) && p.l1 != best.l1 => {
                best.gamma + (1.0 - best.l1) * (best.gamma - p.gamma) / (best.l1 - p.l1)
            }
            _ => best.gamma / best.l1,
        };
        if !(next_gamma.is_finite() && next_gamma > 0.0) {
            break;
        }
        match evaluate(next_gamma) {
            Ok(e) if e.gap() < best.gap() => {
                previous = Some(std::mem::replace(&mut best, e));
            }
            _ => break,
        }
    }
    best
}

/// Weights satisfying factor neutrality, `sum |w| = 1` and the bounds.
pub fn bounded_regression(
    alpha: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
    bounds: &BoundSpec,
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    solve(alpha, loadings, z, bounds, config).map(|s| s.weights)
}

/// [`bounded_regression`] with the final state attached.
pub fn solve(
    alpha: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
    bounds: &BoundSpec,
    config: &SolverConfig,
) -> Result<BoundedSolution> {
    run(alpha, loadings, z, bounds, None, config)
}

/// Rebalancing from factor-neutral prior weights `w* = H*/I`.
///
/// The membership iteration runs on the trades `x = w - w*` against
/// `trade_bounds`; the gamma loop normalizes the resulting holdings `w`.
/// Returns `(w, x)`.
pub fn bounded_regression_rebalance(
    expected_returns: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
    trade_bounds: &BoundSpec,
    prior_weights: &DVector<f64>,
    config: &SolverConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    solve_rebalance(expected_returns, loadings, z, trade_bounds, prior_weights, config)
        .map(|s| (s.weights, s.trades))
}

pub fn solve_rebalance(
    expected_returns: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
    trade_bounds: &BoundSpec,
    prior_weights: &DVector<f64>,
    config: &SolverConfig,
) -> Result<BoundedSolution> {
    if prior_weights.len() != loadings.n() {
        return Err(Error::DimensionMismatch {
            what: "prior weights",
            expected: loadings.n(),
            actual: prior_weights.len(),
        });
    }
    let residual = neutrality_residual(prior_weights, loadings.values());
    let scale = neutrality_scale(prior_weights, loadings.values());
    if residual > PRIOR_NEUTRALITY_RTOL * scale {
        return Err(Error::NonNeutralPrior {
            residual: if scale > 0.0 { residual / scale } else { residual },
        });
    }
    run(expected_returns, loadings, z, trade_bounds, Some(prior_weights), config)
}

/// Post-hoc check of the fixed-gamma optimality conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `max |w_i - z_i (t_i - (L Q~^{-1} y)_i)|` over free elements.
    pub free_residual: f64,
    /// Largest shortfall of the regression value below `w^+` on `J+`.
    pub upper_violation: f64,
    /// Largest excess of the regression value above `w^-` on `J-`.
    pub lower_violation: f64,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.free_residual.max(self.upper_violation).max(self.lower_violation)
    }
}

/// Evaluates the free-element equations and the `J+` / `J-` sign conditions
/// for `w` against `target` (the scaled returns of the final fixed-gamma
/// problem). Membership is re-derived from `w` with `tol`.
pub fn kkt_certificate(
    target: &DVector<f64>,
    loadings: &LoadingsMatrix,
    z: &RegressionWeights,
    bounds: &BoundSpec,
    w: &DVector<f64>,
    tol: f64,
) -> Result<KktReport> {
    check_dims(target, loadings, z)?;
    let red = Reduced::new(loadings, z, bounds)?;
    let w = red.pick(w);
    let target = red.pick(target);
    let (jp, jm) = red.membership(&w, tol);
    let n = red.len();
    let free: Vec<usize> = (0..n).filter(|&i| !jp[i] && !jm[i]).collect();
    let mut report = KktReport {
        free_residual: 0.0,
        upper_violation: 0.0,
        lower_violation: 0.0,
    };
    if free.is_empty() {
        // Multipliers are not determined by a restricted regression here.
        return Ok(report);
    }
    let k = red.lam.ncols();
    let mut y = DVector::zeros(k);
    for i in 0..n {
        let c = if jp[i] {
            red.upper[i]
        } else if jm[i] {
            red.lower[i]
        } else {
            red.z[i] * target[i]
        };
        for a in 0..k {
            y[a] += c * red.lam[(i, a)];
        }
    }
    let normal = RestrictedNormal::build(&red.lam, &red.z, &free)?;
    let v = normal.solve_full(&y);
    for i in 0..n {
        let fitted: f64 = normal
            .kept_columns
            .iter()
            .zip(v.iter())
            .map(|(&a, va)| red.lam[(i, a)] * va)
            .sum();
        let value = red.z[i] * (target[i] - fitted);
        if jp[i] {
            report.upper_violation = report.upper_violation.max(red.upper[i] - value);
        } else if jm[i] {
            report.lower_violation = report.lower_violation.max(value - red.lower[i]);
        } else {
            report.free_residual = report.free_residual.max((w[i] - value).abs());
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn intercept(n: usize) -> LoadingsMatrix {
        LoadingsMatrix::intercept(n).unwrap()
    }

    #[test]
    fn clip_to_box() {
        let b = BoundSpec::symmetric(2, 0.5);
        let (w, t) = clip_step(&v(&[0.0, 0.0]), &v(&[0.6, -0.6]), &b);
        assert!((w - v(&[0.5, -0.5])).amax() < 1e-15);
        assert!((t.unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn clip_feasible_target_is_reached() {
        let b = BoundSpec::symmetric(2, 0.5);
        let (w, t) = clip_step(&v(&[0.1, -0.1]), &v(&[0.3, -0.3]), &b);
        assert_eq!(w, v(&[0.3, -0.3]));
        assert_eq!(t, Some(1.0));
    }

    #[test]
    fn clip_zero_step() {
        let b = BoundSpec::symmetric(2, 0.5);
        let (w, t) = clip_step(&v(&[0.2, -0.2]), &v(&[0.2, -0.2]), &b);
        assert_eq!(w, v(&[0.2, -0.2]));
        assert_eq!(t, None);
    }

    #[test]
    fn fixed_gamma_canonical_membership() {
        let b = BoundSpec::symmetric(4, 0.3);
        let cfg = SolverConfig::default();
        let (w, state) =
            solve_fixed_gamma(&v(&[0.4, 0.1, -0.1, -0.4]), &intercept(4), &RegressionWeights::ones(4), &b, &cfg)
                .unwrap();
        assert_eq!(state.j_plus, vec![0]);
        assert_eq!(state.j_minus, vec![3]);
        assert!((w - v(&[0.3, 0.1, -0.1, -0.3])).amax() < 1e-15);
    }

    #[test]
    fn fixed_gamma_unbounded_limit() {
        let b = BoundSpec::unbounded(3);
        let z = RegressionWeights::new(v(&[1.0, 2.0, 0.5])).unwrap();
        let alpha = v(&[0.1, -0.05, 0.2]);
        let (w, state) = solve_fixed_gamma(&alpha, &intercept(3), &z, &b, &SolverConfig::default()).unwrap();
        let reg = crate::regression::weighted_residuals(&alpha, &intercept(3), &z).unwrap();
        assert!((w - reg.residuals.component_mul(z.as_vector())).amax() < 1e-15);
        assert!(state.j_plus.is_empty() && state.j_minus.is_empty());
    }

    #[test]
    fn fixed_gamma_zero_residual() {
        let (w, state) = solve_fixed_gamma(
            &v(&[0.2, 0.2]),
            &intercept(2),
            &RegressionWeights::ones(2),
            &BoundSpec::symmetric(2, 0.3),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(w.amax() < 1e-15);
        assert!(state.j_plus.is_empty() && state.j_minus.is_empty());
    }

    #[test]
    fn canonical_instance() {
        let w = bounded_regression(
            &v(&[4.0, 1.0, -1.0, -4.0]),
            &intercept(4),
            &RegressionWeights::ones(4),
            &BoundSpec::symmetric(4, 0.3),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((w - v(&[0.3, 0.2, -0.2, -0.3])).amax() < 1e-12);
    }

    #[test]
    fn solution_on_bounds_converges_immediately() {
        let s = solve(
            &v(&[1.0, 3.0]),
            &intercept(2),
            &RegressionWeights::ones(2),
            &BoundSpec::symmetric(2, 0.5),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((&s.weights - v(&[-0.5, 0.5])).amax() < 1e-15);
        assert_eq!(s.state.outer_iterations, 1);
    }

    #[test]
    fn infeasible_caps() {
        let err = bounded_regression(
            &v(&[1.0, 3.0]),
            &intercept(2),
            &RegressionWeights::ones(2),
            &BoundSpec::symmetric(2, 0.4),
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NormalizationInfeasible { .. }));
        assert!(err.to_string().contains("normalization infeasible under bounds"));
    }

    #[test]
    fn crosses_a_wide_plateau() {
        // sum |w~| stays at 0.98761 while gamma grows eightfold; plain
        // rescaling would need about 166 outer iterations to get across.
        let alpha = v(&[0.013820216566509768, -0.004907478965818113, 0.011980161621729681, 0.011977173330768155, 0.0004519229080334988]);
        let z = RegressionWeights::new(v(&[14553.305379255302, 14023.827841840834, 13584.148038617828, 11268.935121073686, 16398.66303721326])).unwrap();
        let cap = v(&[0.5867855517149551, 0.28463177717996235, 0.43862259784278024, 1.0986452625720793, 0.20917174820788684]);
        let b = BoundSpec::new(-&cap, cap).unwrap();
        let s = solve(&alpha, &intercept(5), &z, &b, &SolverConfig::default()).unwrap();
        let expected = crate::oracle::oracle_bounded_regression(&alpha, &intercept(5), &z, &b).unwrap();
        assert!((&s.weights - expected).amax() < 1e-10);
        assert!(s.state.outer_iterations < 30, "{}", s.state.outer_iterations);
    }

    #[test]
    fn gamma_search_handles_non_monotone_l1() {
        // Random instances where the rescaling alone crawls: a slow approach
        // from above (seed 8) and an L1 that falls, stalls and then rises
        // past 1 only near gamma = 25 (seed 9). Seed 31 crosses 1 just
        // before a long plateau at 1.0146 and must bisect back to the root.
        for (seed, index) in [(8u64, 139usize), (9, 58), (31, 829)] {
            let inst = nth_random_instance(seed, index);
            let s = solve(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds, &SolverConfig::default()).unwrap();
            let expected =
                crate::oracle::oracle_bounded_regression(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds).unwrap();
            assert!((&s.weights - expected).amax() < 1e-10, "seed {seed}");
        }
    }

    fn nth_random_instance(seed: u64, index: usize) -> crate::oracle::RandomInstance {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut inst = crate::oracle::random_instance(&mut rng, 8, 3).unwrap();
        for _ in 0..index {
            inst = crate::oracle::random_instance(&mut rng, 8, 3).unwrap();
        }
        inst
    }

    #[test]
    fn gamma_growth_is_capped() {
        // sum |w| stays near 0.72 until gamma is about 5e13 times its seed.
        let inst = nth_random_instance(1, 133);
        let err = solve(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds, &SolverConfig::default()).unwrap_err();
        match err {
            Error::NormalizationInfeasible { l1, .. } => assert!(l1 < 0.75),
            other => panic!("unexpected {other:?}"),
        }
        assert!(crate::oracle::oracle_bounded_regression(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds).is_err());
    }

    #[test]
    fn fixed_elements_stay_zero() {
        let b = BoundSpec::new(v(&[-0.5, 0.0, -0.5, -0.5]), v(&[0.5, 0.0, 0.5, 0.5])).unwrap();
        let w = bounded_regression(
            &v(&[1.0, 9.0, 2.0, -3.0]),
            &intercept(4),
            &RegressionWeights::ones(4),
            &b,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(w[1], 0.0);
        assert!(w.sum().abs() < 1e-14);
        assert!((l1_norm(&w) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rebalance_rejects_non_neutral_prior() {
        let err = bounded_regression_rebalance(
            &v(&[4.0, 1.0, -1.0, -4.0]),
            &intercept(4),
            &RegressionWeights::ones(4),
            &BoundSpec::symmetric(4, 0.3),
            &v(&[0.05, -0.05, 0.05, -0.049]),
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonNeutralPrior { .. }));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SolverConfig {
            tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
