use boundreg_core::bounded::{bounded_regression, solve_rebalance, BoundSpec, SolverConfig};
use boundreg_core::loadings::{augment_style_columns, pca_loadings, sample_covariance, LoadingsMatrix};
use boundreg_core::oracle::{oracle_fixed_gamma, random_instance};
use boundreg_core::panel::TimeSeriesPanel;
use boundreg_core::regression::{weighted_residuals, RegressionWeights};
use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_panel(rng: &mut ChaCha8Rng, n: usize, obs: usize) -> TimeSeriesPanel {
    let base = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
    let dates = (0..obs).rev().map(|k| base + chrono::Days::new(k as u64)).collect();
    let values = DMatrix::from_fn(n, obs, |_, _| rng.sample::<f64, _>(StandardNormal));
    TimeSeriesPanel::new((0..n).map(|i| format!("a{i}")).collect(), dates, values).unwrap()
}

#[test]
fn covariance_matches_two_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_panel(&mut rng, 3, 6);
    let c = sample_covariance(&p).unwrap();
    let x = p.values();
    let obs = x.ncols();
    let means: Vec<f64> = (0..3).map(|i| (0..obs).map(|t| x[(i, t)]).sum::<f64>() / obs as f64).collect();
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for t in 0..obs {
                s += (x[(i, t)] - means[i]) * (x[(j, t)] - means[j]);
            }
            assert!((c.values()[(i, j)] - s / (obs - 1) as f64).abs() < 1e-14);
        }
    }
}

/// Cyclic Jacobi rotations; returns (eigenvalues, eigenvectors as columns).
fn jacobi(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut v = DMatrix::identity(n, n);
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|p| (0..n).map(move |q| (p, q))).filter(|(p, q)| p != q).map(|(p, q)| a[(p, q)].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

#[test]
fn pca_matches_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (n, obs) in [(4, 10), (6, 4), (5, 5)] {
        let p = random_panel(&mut rng, n, obs);
        let c = sample_covariance(&p).unwrap();
        let l = pca_loadings(&c, 1e-10).unwrap();
        let (vals, vecs) = jacobi(c.values().clone());
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let mut order: Vec<usize> = (0..n).filter(|&k| vals[k] > 1e-10 * max).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        assert_eq!(l.k(), order.len(), "rank for n={n}, obs={obs}");
        assert!(l.k() <= obs - 1);
        for (col, &k) in order.iter().enumerate() {
            let lam = (l.values().column(col).transpose() * c.values() * l.values().column(col))[(0, 0)];
            assert!((lam - vals[k]).abs() <= 1e-10 * max);
            let dot = l.values().column(col).dot(&vecs.column(k));
            assert!((dot.abs() - 1.0).abs() < 1e-8);
        }
    }
}

/// Plain normal equations `(L^T Z L) b = L^T Z alpha` by Gaussian elimination.
fn normal_equation_residuals(alpha: &DVector<f64>, l: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    let k = l.ncols();
    let mut a = vec![vec![0.0; k + 1]; k];
    for r in 0..k {
        for c in 0..k {
            a[r][c] = (0..l.nrows()).map(|i| z[i] * l[(i, r)] * l[(i, c)]).sum();
        }
        a[r][k] = (0..l.nrows()).map(|i| z[i] * l[(i, r)] * alpha[i]).sum();
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let b = DVector::from_fn(k, |r, _| a[r][k] / a[r][r]);
    alpha - l * b
}

#[test]
fn residuals_match_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let n = rng.random_range(2..=20);
        let k = rng.random_range(1..=5.min(n - 1).max(1));
        let styles = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let l = if k == 1 {
            LoadingsMatrix::intercept(n).unwrap()
        } else {
            augment_style_columns(&LoadingsMatrix::intercept(n).unwrap(), &styles.columns(0, k - 1).into_owned(), None).unwrap()
        };
        let z = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
        let alpha = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = weighted_residuals(&alpha, &l, &RegressionWeights::new(z.clone()).unwrap()).unwrap();
        let expected = normal_equation_residuals(&alpha, l.values(), &z);
        assert!((r.residuals - expected).amax() < 1e-9);
    }
}

#[test]
fn rebalance_matches_oracle_in_trade_space() {
    let l = LoadingsMatrix::intercept(4).unwrap();
    let z = RegressionWeights::ones(4);
    let prior = DVector::from_column_slice(&[0.05, -0.05, 0.05, -0.05]);
    let alpha = DVector::from_column_slice(&[4.0, 1.0, -1.0, -4.0]);
    let bounds = BoundSpec::symmetric(4, 0.3);
    let sol = solve_rebalance(&alpha, &l, &z, &bounds, &prior, &SolverConfig::default()).unwrap();
    let o = oracle_fixed_gamma(&sol.target, &l, &z, &bounds).unwrap();
    assert!((&sol.trades - &o.weights).amax() < 1e-10);
    assert!((&sol.weights - (&sol.trades + &prior)).amax() == 0.0);
    assert!((sol.weights.abs().sum() - 1.0).abs() < 1e-10);
}

#[test]
fn zero_prior_rebalance_is_plain_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = SolverConfig::default();
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 8, 3).unwrap();
        let n = inst.alpha.len();
        let plain = bounded_regression(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds, &cfg);
        let re = solve_rebalance(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds, &DVector::zeros(n), &cfg);
        match (plain, re) {
            (Ok(w), Ok(s)) => assert!((w - s.weights).amax() <= 1e-12),
            (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
            (a, b) => panic!("{a:?} vs {:?}", b.map(|s| s.weights)),
        }
    }
}
