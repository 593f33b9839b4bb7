use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use boundreg_core::backtest::synthetic::{generate, SyntheticConfig};
use boundreg_core::backtest::{run_backtest, LoadingsIncarnation};
use boundreg_core::bounded::{self, read_bounds, solve_rebalance, BoundSpec, BoundedSolution};
use boundreg_core::linalg::neutrality_residual;
use boundreg_core::loadings::{read_classification, read_styles, LoadingsMatrix};
use boundreg_core::panel::{load_panel, serialize_panel, PricePanel};
use boundreg_core::portfolio::{read_overrides, rebalancing_bounds};
use boundreg_core::regression::RegressionWeights;
use boundreg_core::verify::{verify_against_oracle, FailureKind, AGREEMENT_TOL};
use boundreg_core::DVector;
use log::{info, warn};

use crate::config::FileConfig;
use crate::inputs::{read_aligned_vector, read_covariance_source, read_keyed_vector, read_with};
use crate::{BacktestArgs, CliError, GenSyntheticArgs, ProblemArgs, RebalanceArgs, SolveArgs, VerifyArgs};

/// Writes to `path`, or stdout when `None`.
fn emit(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, f),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock).and_then(|_| lock.flush()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    f(&mut out).and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
}

/// Core writers report `boundreg_core::Error`; fold them into io errors for [`write_file`].
fn core_to_io(e: boundreg_core::Error) -> io::Error {
    match e {
        boundreg_core::Error::Io(e) => e,
        other => io::Error::other(other.to_string()),
    }
}

struct Problem {
    ids: Vec<String>,
    alpha: DVector<f64>,
    loadings: LoadingsMatrix,
    z: RegressionWeights,
    config: FileConfig,
}

fn load_problem(args: &ProblemArgs) -> Result<Problem, CliError> {
    let config = FileConfig::load(args.config.as_deref())?;
    let (ids, alpha) = read_keyed_vector(&args.alpha)?;
    let loadings = args.loadings.build(&ids)?;
    let z = match (&args.z, &args.cov) {
        (Some(path), _) => RegressionWeights::new(read_aligned_vector(path, &ids)?)?,
        (None, Some(path)) => RegressionWeights::from_cov(&read_covariance_source(path, &ids)?)?,
        (None, None) => RegressionWeights::ones(ids.len()),
    };
    Ok(Problem {
        ids,
        alpha,
        loadings,
        z,
        config,
    })
}

fn summarize(sol: &BoundedSolution, loadings: &LoadingsMatrix) {
    eprintln!("sum |w| = {}", sol.l1);
    eprintln!("neutrality residual = {}", neutrality_residual(&sol.weights, loadings.values()));
    eprintln!("gamma = {}", sol.state.gamma);
    eprintln!("outer iterations = {}", sol.state.outer_iterations);
    eprintln!("inner iterations (final gamma) = {}", sol.state.inner_iterations);
}

pub fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let p = load_problem(&args.problem)?;
    let solver = p.config.solver()?;
    let bounds = match &args.bounds {
        Some(path) => read_with(path, |f| read_bounds(f, &p.ids))?,
        None => BoundSpec::unbounded(p.ids.len()),
    };
    let sol = bounded::solve(&p.alpha, &p.loadings, &p.z, &bounds, &solver)?;
    summarize(&sol, &p.loadings);
    emit(args.problem.output.as_deref(), |out| {
        writeln!(out, "id,weight")?;
        for (id, w) in p.ids.iter().zip(sol.weights.iter()) {
            writeln!(out, "{id},{w}")?;
        }
        Ok(())
    })
}

pub fn rebalance(args: &RebalanceArgs) -> Result<(), CliError> {
    let p = load_problem(&args.problem)?;
    let solver = p.config.solver()?;
    let level = args.investment_level.unwrap_or_else(|| p.config.investment_level());
    if !(level > 0.0 && level.is_finite()) {
        return Err(CliError::Usage(format!("investment level must be positive, got {level}")));
    }
    let prior = read_aligned_vector(&args.prior, &p.ids)?;
    let dollars = match (&args.trade_bounds, &args.addv) {
        (Some(path), _) => read_with(path, |f| read_bounds(f, &p.ids))?,
        (None, Some(path)) => {
            let addv = read_aligned_vector(path, &p.ids)?;
            rebalancing_bounds(&p.config.limits()?, level, &addv, &prior)?
        }
        (None, None) => return Err(CliError::Usage("either --trade-bounds or --addv is required".into())),
    };
    let dollars = match &args.overrides {
        Some(path) => read_with(path, |f| read_overrides(f, &p.ids))?.apply(&dollars)?,
        None => dollars,
    };
    let trade_bounds = dollars.scaled(1.0 / level)?;
    let sol = solve_rebalance(&p.alpha, &p.loadings, &p.z, &trade_bounds, &(&prior / level), &solver)?;
    summarize(&sol, &p.loadings);
    emit(args.problem.output.as_deref(), |out| {
        writeln!(out, "id,weight,holding,trade")?;
        for (k, id) in p.ids.iter().enumerate() {
            let (w, x) = (sol.weights[k], sol.trades[k]);
            writeln!(out, "{id},{w},{},{}", w * level, x * level)?;
        }
        Ok(())
    })
}

fn load_prices(dir: &Path) -> Result<PricePanel, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("data directory {} does not exist", dir.display())));
    }
    let mut panels = Vec::with_capacity(3);
    for name in ["open.csv", "close_adj.csv", "volume.csv"] {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(CliError::Usage(format!("data directory is missing {}", path.display())));
        }
        panels.push(read_with(&path, load_panel)?);
    }
    Ok(PricePanel::from_panels(&panels[0], &panels[1], &panels[2])?)
}

pub fn backtest(args: &BacktestArgs) -> Result<(), CliError> {
    let config = FileConfig::load(args.config.as_deref())?;
    let bt = config.backtest()?;
    let prices = load_prices(&args.data)?;
    let ids = prices.instrument_ids().to_vec();
    let needs_labels = bt.loadings != LoadingsIncarnation::Intercept;
    let labels = if needs_labels {
        let path = args.data.join("classification.csv");
        Some(read_with(&path, |f| read_classification(f, &ids))?)
    } else {
        None
    };
    let styles = if bt.loadings == LoadingsIncarnation::ClassificationPlusStyles {
        let path = args.data.join("styles.csv");
        Some(read_with(&path, |f| read_styles(f, &ids))?.1)
    } else {
        None
    };
    let report = run_backtest(&bt, &prices, labels.as_deref(), styles.as_ref())?;

    fs::create_dir_all(&args.output).map_err(|e| CliError::io(&args.output, e))?;
    write_file(&args.output.join("report.csv"), |out| report.write_csv(out).map_err(core_to_io))?;
    write_file(&args.output.join("cumpnl.csv"), |out| {
        report.write_cumulative_pnl(out).map_err(core_to_io)
    })?;
    if bt.keep_positions {
        write_file(&args.output.join("weights.csv"), |out| {
            report.write_positions(&ids, out).map_err(core_to_io)
        })?;
    }
    let skipped = report.skipped_days().len();
    eprintln!("days = {}, skipped = {skipped}", report.days.len());
    eprintln!("roc = {}", report.roc);
    match report.sr {
        Some(sr) => eprintln!("sr = {sr}"),
        None => eprintln!("sr = undefined"),
    }
    eprintln!("cps = {}", report.cps);
    Ok(())
}

pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let config = FileConfig::load(args.config.as_deref())?;
    let mut solver = config.solver()?;
    if let Some(tol) = args.solver_tol {
        solver.tol = tol;
    }
    if args.count == 0 {
        warn!("no instances requested, passing trivially");
    }
    let report = verify_against_oracle(args.seed, args.count, args.max_n, args.max_k, &solver)?;
    println!("instances = {}", report.instances);
    println!("compared = {}", report.compared);
    println!("both failed = {}", report.both_failed);
    println!("max discrepancy = {:e}", report.max_discrepancy);
    for f in &report.failures {
        match &f.kind {
            FailureKind::Discrepancy(d) => println!("instance {}: discrepancy {d:e}", f.instance),
            FailureKind::SolverOnly(e) => println!("instance {}: solver failed, oracle converged: {e}", f.instance),
            FailureKind::OracleOnly(e) => println!("instance {}: oracle failed, solver converged: {e}", f.instance),
        }
    }
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(CliError::Verification(format!(
            "{} of {} instances disagree with the oracle (tolerance {AGREEMENT_TOL:e})",
            report.failures.len(),
            report.instances
        )))
    }
}

pub fn gen_synthetic(args: &GenSyntheticArgs) -> Result<(), CliError> {
    let cfg = SyntheticConfig {
        instruments: args.instruments,
        days: args.days,
        seed: args.seed,
        gap_vol: args.gap_vol,
        reversion: args.reversion,
        intraday_vol: args.intraday_vol,
        categories: args.categories,
        styles: args.styles,
        ..Default::default()
    };
    let data = generate(&cfg)?;
    let dir = &args.output;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let ids = data.prices.instrument_ids();
    let [open, close, volume] = data.prices.to_panels()?;
    for (name, panel) in [("open.csv", &open), ("close_adj.csv", &close), ("volume.csv", &volume)] {
        write_file(&dir.join(name), |out| serialize_panel(panel, out).map_err(core_to_io))?;
    }
    write_file(&dir.join("classification.csv"), |out| {
        writeln!(out, "id,label")?;
        for (id, label) in ids.iter().zip(&data.labels) {
            writeln!(out, "{id},{label}")?;
        }
        Ok(())
    })?;
    if data.styles.ncols() > 0 {
        write_file(&dir.join("styles.csv"), |out| {
            let names: Vec<String> = (1..=data.styles.ncols()).map(|s| format!("style{s}")).collect();
            writeln!(out, "id,{}", names.join(","))?;
            for (i, id) in ids.iter().enumerate() {
                let row: Vec<String> = data.styles.row(i).iter().map(|v| v.to_string()).collect();
                writeln!(out, "{id},{}", row.join(","))?;
            }
            Ok(())
        })?;
    }
    info!("wrote {} instruments x {} days to {}", ids.len(), args.days, dir.display());
    Ok(())
}
