use boundreg_core::backtest::synthetic::{generate, SyntheticConfig};
use boundreg_core::backtest::{run_backtest, BacktestConfig, BoundMode, DayStatus, LoadingsIncarnation};
use boundreg_core::panel::PricePanel;
use chrono::NaiveDate;
use nalgebra::DMatrix;

fn small_config(window: usize) -> BacktestConfig {
    BacktestConfig {
        universe_size: 100,
        window,
        refresh_period: window,
        investment_level: 1e6,
        keep_positions: true,
        ..Default::default()
    }
}

#[test]
fn constant_prices_trade_nothing() {
    let (n, d) = (3, 6);
    let dates = (0..d).map(|k| NaiveDate::from_ymd_opt(2024, 1, 1 + k as u32).unwrap()).collect();
    let flat = DMatrix::from_element(n, d, 10.0);
    let prices = PricePanel::new(
        vec!["a".into(), "b".into(), "c".into()],
        dates,
        flat.clone(),
        flat.clone(),
        DMatrix::from_element(n, d, 1000.0),
    )
    .unwrap();
    let r = run_backtest(&small_config(2), &prices, None, None).unwrap();
    assert_eq!(r.days.len(), 3);
    assert!(r.days.iter().all(|day| day.pnl == 0.0 && day.status == DayStatus::Flat));
    assert_eq!(r.sr, None);
    assert_eq!(r.cps, 0.0);
    assert_eq!(r.roc, 0.0);
}

#[test]
fn insufficient_history_is_an_error() {
    let data = generate(&SyntheticConfig { days: 22, ..Default::default() }).unwrap();
    assert!(run_backtest(&small_config(21), &data.prices, None, None).is_err());
}

/// With gaps that fully revert, the day's P&L is `sum_i H_i (exp(E_i) - 1)`
/// with `H` the z-weighted demeaned returns scaled to `sum |H| = I`.
#[test]
fn full_reversion_matches_closed_form() {
    let cfg = SyntheticConfig {
        instruments: 6,
        days: 60,
        seed: 3,
        reversion: 1.0,
        intraday_vol: 0.0,
        ..Default::default()
    };
    let data = generate(&cfg).unwrap();
    let p = &data.prices;
    let bt = small_config(10);
    let report = run_backtest(&bt, p, None, None).unwrap();
    let first = bt.window + 1;
    assert_eq!(report.days.len(), p.days() - first);
    for (k, day) in report.days.iter().enumerate() {
        let d = first + k;
        let start = first + (k / bt.refresh_period) * bt.refresh_period;
        let e = |i: usize, t: usize| (p.close_adj[(i, t - 1)] / p.open[(i, t)]).ln();
        let z: Vec<f64> = (0..p.n())
            .map(|i| {
                let xs: Vec<f64> = (start - bt.window..start).map(|t| e(i, t)).collect();
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                (xs.len() - 1) as f64 / xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
            })
            .collect();
        let mean_z = (0..p.n()).map(|i| z[i] * e(i, d)).sum::<f64>() / z.iter().sum::<f64>();
        let raw: Vec<f64> = (0..p.n()).map(|i| z[i] * (e(i, d) - mean_z)).collect();
        let scale = bt.investment_level / raw.iter().map(|x| x.abs()).sum::<f64>();
        let expected: f64 = (0..p.n()).map(|i| raw[i] * scale * (e(i, d).exp() - 1.0)).sum();
        assert!(
            (day.pnl - expected).abs() <= 1e-9 * bt.investment_level,
            "{}: {} vs {}",
            day.date,
            day.pnl,
            expected
        );
        assert!(day.pnl > 0.0, "{}: {}", day.date, day.pnl);
    }
    assert!(report.roc > 0.0);
}

#[test]
fn addv_cap_echo_and_neutrality() {
    let data = generate(&SyntheticConfig { seed: 9, ..Default::default() }).unwrap();
    let cfg = BacktestConfig {
        bound_mode: BoundMode::AddvFraction(0.01),
        loadings: LoadingsIncarnation::Classification,
        investment_level: 2e5,
        ..small_config(21)
    };
    let r = run_backtest(&cfg, &data.prices, Some(&data.labels), None).unwrap();
    let positions = r.positions.as_ref().unwrap();
    assert!(positions.len() >= 70, "only {} traded days", positions.len());
    for day in positions {
        let net: f64 = day.holdings.iter().sum();
        assert!(net.abs() <= 1e-6 * cfg.investment_level);
        for k in 0..day.members.len() {
            assert!(day.holdings[k].abs() <= 0.01 * day.addv[k] * (1.0 + 1e-6));
        }
    }
}

#[test]
fn styles_incarnation_runs() {
    let data = generate(&SyntheticConfig { instruments: 8, seed: 4, categories: 2, ..Default::default() }).unwrap();
    let cfg = BacktestConfig {
        loadings: LoadingsIncarnation::ClassificationPlusStyles,
        ..small_config(21)
    };
    let r = run_backtest(&cfg, &data.prices, Some(&data.labels), Some(&data.styles)).unwrap();
    for day in r.positions.as_ref().unwrap() {
        let exposure: f64 = day.members.iter().enumerate().map(|(k, &i)| day.weights[k] * data.styles[(i, 0)]).sum();
        assert!(exposure.abs() < 1e-10);
    }
    let missing = run_backtest(&cfg, &data.prices, Some(&data.labels), None);
    assert!(missing.is_err());
}
