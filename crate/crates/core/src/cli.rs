//! Command-line surface: `fit`, `forecast`, `synthesize`, `evaluate`,
//! `backtest` and `simulate`.
//!
//! Every command computes all of its outputs in memory first and then writes
//! each file through a temporary file renamed into place, so a failed run
//! leaves nothing behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baselines::{self, BaselineError, DnsModel};
use crate::doc::KeyedDocument;
use crate::eval::{self, EvalError, RollingSpec};
use crate::fdfm::{self, FdfmError, FdfmModel};
use crate::io::{self, IoError, RunConfig, UnitMode};
use crate::models::{DnsFactory, FdfmFactory, ModelError, ModelFactory, RwFactory};
use crate::sim::{self, SimSpec};
use crate::trading::{self, Accounting, ModelForecaster, PerfectForesight, ReturnBook, TradingError, YieldForecaster};

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Fdfm(#[from] FdfmError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Trading(#[from] TradingError),
    #[error("writing {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(IoError::Config(_)) => "config",
            CliError::Io(_) => "input",
            CliError::Fdfm(_) | CliError::Baseline(_) | CliError::Model(_) => "model",
            CliError::Eval(_) => "evaluation",
            CliError::Trading(_) => "trading",
            CliError::Write { .. } => "output",
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fdfm", version, about = "Functional dynamic factor models for yield curves")]
struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate a model and serialize it.
    Fit(FitArgs),
    /// h-step curve forecasts from a serialized model.
    Forecast(ForecastArgs),
    /// Withhold a maturity, refit, and synthesize its series.
    Synthesize(SynthesizeArgs),
    /// Rolling forecast metrics or the column-deletion synthesis study.
    Evaluate(EvaluateArgs),
    /// Pairs-trading backtests.
    Backtest(BacktestArgs),
    /// Generate a synthetic FDFM panel.
    Simulate(SimulateArgs),
}

#[derive(clap::Args, Debug)]
struct ModelArgs {
    /// Yield CSV (`date,<maturity>...`, annualized percent).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Number of FDFM factors.
    #[arg(long = "K")]
    factors: Option<usize>,
    /// Fixed per-factor smoothing parameters (disables GCV).
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// DNS decay parameter per month.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(clap::Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: ModelArgs,
    /// fdfm or dns.
    #[arg(long)]
    model: Option<String>,
}

#[derive(clap::Args, Debug)]
struct ForecastArgs {
    /// Model document written by `fit`.
    #[arg(long)]
    model_file: PathBuf,
    /// Forecast every horizon from 1 to this value.
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// Maturities in months; defaults to the model's knots.
    #[arg(long, value_delimiter = ',')]
    maturities: Option<Vec<f64>>,
}

#[derive(clap::Args, Debug)]
struct SynthesizeArgs {
    #[command(flatten)]
    common: ModelArgs,
    #[arg(long)]
    model: Option<String>,
    /// Maturity in months to synthesize; withheld first if it is a column.
    #[arg(long)]
    maturity: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum EvalKind {
    Rolling,
    Synthesis,
}

#[derive(clap::Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: ModelArgs,
    /// Comma-separated models among fdfm, dns, rw.
    #[arg(long, value_delimiter = ',')]
    model: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = EvalKind::Rolling)]
    kind: EvalKind,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    /// Deleted-column counts for the synthesis study.
    #[arg(long, value_delimiter = ',')]
    deleted: Option<Vec<usize>>,
}

#[derive(clap::Args, Debug)]
struct BacktestArgs {
    #[command(flatten)]
    common: ModelArgs,
    /// Comma-separated models among fdfm, dns, rw, perfect.
    #[arg(long, value_delimiter = ',')]
    model: Option<Vec<String>>,
    /// 1 weighted pairs, 2 optimal pairs, 3 all fixed pairs.
    #[arg(long)]
    algo: Option<u8>,
    /// Fixed short maturity for algorithm 2.
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stake: Option<f64>,
    /// Profit from simple instead of log return spreads.
    #[arg(long)]
    simple_returns: bool,
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    #[arg(long = "K")]
    factors: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    phi: Option<Vec<f64>>,
    #[arg(long)]
    sigma: Option<f64>,
}

/// Parse and run; returns the process exit status. Errors are printed as a
/// single line `error: kind=<kind> message="<text>"` on stderr.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: kind=usage message={first:?}");
            return 2;
        }
    };
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: kind={} message={:?}", e.kind(), e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

struct Context {
    config: RunConfig,
    seed: u64,
    out_dir: PathBuf,
}

impl Context {
    fn data_path(&self, flag: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.clone()
            .or_else(|| self.config.data.as_ref().map(PathBuf::from))
            .ok_or_else(|| CliError::Usage("no input data: pass --data or set `data` in the config".into()))
    }

    fn fdfm_config(&self, args: &ModelArgs) -> Result<fdfm::FdfmConfig, CliError> {
        let mut section = self.config.fdfm.clone();
        if let Some(k) = args.factors {
            section.factors = k;
        }
        if let Some(l) = &args.lambda {
            section.fixed_lambdas = Some(l.clone());
        }
        Ok(section.to_config()?)
    }

    fn alpha(&self, args: &ModelArgs) -> f64 {
        args.alpha.unwrap_or(self.config.dns.alpha)
    }

    fn factory(&self, name: &str, args: &ModelArgs) -> Result<Box<dyn ModelFactory>, CliError> {
        Ok(match name {
            "fdfm" => Box::new(FdfmFactory { config: self.fdfm_config(args)? }),
            "dns" => Box::new(DnsFactory { alpha: self.alpha(args) }),
            "rw" => Box::new(RwFactory),
            other => return Err(CliError::Usage(format!("unknown model `{other}`; expected fdfm, dns or rw"))),
        })
    }

    fn models(&self, flag: &Option<Vec<String>>) -> Vec<String> {
        flag.clone().unwrap_or_else(|| vec![self.config.model.clone().unwrap_or_else(|| "fdfm".into())])
    }
}

type Outputs = Vec<(String, String)>;

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Context {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        out_dir: cli.out_dir.clone().or_else(|| config.out_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| ".".into()),
        config,
    };
    let outputs = match &cli.command {
        Command::Fit(a) => cmd_fit(&ctx, a)?,
        Command::Forecast(a) => cmd_forecast(a)?,
        Command::Synthesize(a) => cmd_synthesize(&ctx, a)?,
        Command::Evaluate(a) => cmd_evaluate(&ctx, a)?,
        Command::Backtest(a) => cmd_backtest(&ctx, a)?,
        Command::Simulate(a) => cmd_simulate(&ctx, a)?,
    };
    write_outputs(&ctx.out_dir, outputs)
}

fn write_outputs(dir: &Path, outputs: Outputs) -> Result<Vec<PathBuf>, CliError> {
    let err = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Write { path, source }
    };
    std::fs::create_dir_all(dir).map_err(err(dir))?;
    let mut written = Vec::new();
    for (name, contents) in outputs {
        let target = dir.join(&name);
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err(&target))?;
        tmp.write_all(contents.as_bytes()).map_err(err(&target))?;
        tmp.as_file().sync_all().map_err(err(&target))?;
        tmp.persist(&target).map_err(|e| err(&target)(e.error))?;
        written.push(target);
    }
    Ok(written)
}

/// Plot grid: every half month across the knot range.
fn plot_grid(lo: f64, hi: f64) -> Vec<f64> {
    let steps = ((hi - lo) / 0.5).floor() as usize;
    let mut g: Vec<f64> = (0..=steps).map(|i| lo + 0.5 * i as f64).collect();
    if *g.last().unwrap() < hi {
        g.push(hi);
    }
    g
}

fn fdfm_loadings_csv(model: &FdfmModel) -> String {
    let mut out = String::from("maturity_months");
    for k in 0..model.k() {
        let _ = write!(out, ",loading_{}", k + 1);
    }
    out.push('\n');
    for t in plot_grid(model.grid.first(), model.grid.last()) {
        let _ = write!(out, "{t}");
        for spline in &model.loadings {
            let _ = write!(out, ",{:.12e}", spline.evaluate(t));
        }
        out.push('\n');
    }
    out
}

fn dns_loadings_csv(alpha: f64, lo: f64, hi: f64) -> Result<String, CliError> {
    let mut out = String::from("maturity_months,level,slope,curvature\n");
    for t in plot_grid(lo, hi) {
        let l = baselines::dns_loadings(t, alpha)?;
        let _ = writeln!(out, "{t},{:.12e},{:.12e},{:.12e}", l[0], l[1], l[2]);
    }
    Ok(out)
}

fn cmd_fit(ctx: &Context, a: &FitArgs) -> Result<Outputs, CliError> {
    let panel = io::load_panel(&ctx.data_path(&a.common.data)?, UnitMode::Percent)?;
    let name = a.model.clone().or_else(|| ctx.config.model.clone()).unwrap_or_else(|| "fdfm".into());
    match name.as_str() {
        "fdfm" => {
            let model = fdfm::fit(&panel, &ctx.fdfm_config(&a.common)?)?;
            if !model.converged {
                log::warn!("EM stopped after {} iterations without meeting the tolerance", model.iterations);
            }
            let mut trace = String::from("iteration,penalized_loglik\n");
            for (i, v) in model.fit_trace.iter().enumerate() {
                let _ = writeln!(trace, "{i},{v:.16e}");
            }
            Ok(vec![
                ("model.txt".into(), fdfm::model_to_string(&model)),
                ("loadings.csv".into(), fdfm_loadings_csv(&model)),
                ("fit_trace.csv".into(), trace),
            ])
        }
        "dns" => {
            let alpha = ctx.alpha(&a.common);
            let model = baselines::dns_fit(&panel, alpha)?;
            Ok(vec![
                ("model.txt".into(), baselines::dns_to_string(&model)),
                ("loadings.csv".into(), dns_loadings_csv(alpha, panel.grid().first(), panel.grid().last())?),
            ])
        }
        other => Err(CliError::Usage(format!("cannot fit `{other}`; expected fdfm or dns"))),
    }
}

enum LoadedModel {
    Fdfm(FdfmModel),
    Dns(DnsModel),
}

fn load_model(path: &Path) -> Result<LoadedModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.display().to_string(), source })?;
    let doc = KeyedDocument::parse(&text).map_err(|e| FdfmError::Document(e.to_string()))?;
    let format: String = doc.value("format").map_err(|e| FdfmError::Document(e.to_string()))?;
    if format.starts_with("dns") {
        Ok(LoadedModel::Dns(baselines::dns_from_str(&text)?))
    } else {
        Ok(LoadedModel::Fdfm(fdfm::model_from_str(&text)?))
    }
}

fn cmd_forecast(a: &ForecastArgs) -> Result<Outputs, CliError> {
    if a.horizon == 0 {
        return Err(CliError::Usage("--horizon must be at least 1".into()));
    }
    let model = load_model(&a.model_file)?;
    let grid = match &model {
        LoadedModel::Fdfm(m) => m.grid.clone(),
        LoadedModel::Dns(m) => m.grid.clone(),
    };
    let points = a.maturities.clone().unwrap_or_else(|| grid.knots().to_vec());
    let mut out = String::from("horizon,maturity_months,forecast_percent_annual,extrapolated\n");
    for h in 1..=a.horizon {
        let (values, flags) = match &model {
            LoadedModel::Fdfm(m) => {
                let f = fdfm::forecast_curve(m, h, &points, None)?;
                (f.values, f.extrapolated)
            }
            LoadedModel::Dns(m) => (baselines::dns_forecast(m, h, &points)?, vec![false; points.len()]),
        };
        for ((t, v), e) in points.iter().zip(values).zip(flags) {
            let _ = writeln!(out, "{h},{t},{v:.12e},{e}");
        }
    }
    Ok(vec![("forecast.csv".into(), out)])
}

fn cmd_synthesize(ctx: &Context, a: &SynthesizeArgs) -> Result<Outputs, CliError> {
    let panel = io::load_panel(&ctx.data_path(&a.common.data)?, UnitMode::Percent)?;
    let name = a.model.clone().or_else(|| ctx.config.model.clone()).unwrap_or_else(|| "fdfm".into());
    let factory = ctx.factory(&name, &a.common)?;
    let withheld = panel.maturities().iter().position(|&t| t == a.maturity);
    let fit_panel = match withheld {
        Some(j) => panel.select_columns(&(0..panel.m()).filter(|&c| c != j).collect::<Vec<_>>())?,
        None => panel.clone(),
    };
    let extrapolated = fit_panel.grid().is_extrapolation(a.maturity);
    let series = factory.fit(&fit_panel)?.synthesize(a.maturity)?;
    let mut out = String::from("date,synthesized_percent_annual,actual_percent_annual,extrapolated\n");
    let dates = panel.dates().unwrap_or(&[]);
    for (i, v) in series.iter().enumerate() {
        let actual = withheld.map(|j| format!("{:.12e}", panel.data()[(i, j)])).unwrap_or_default();
        let _ = writeln!(out, "{},{v:.12e},{actual},{extrapolated}", dates.get(i).map_or("", |s| s.as_str()));
    }
    Ok(vec![(format!("synthesized_{}_{}.csv", factory.name(), a.maturity), out)])
}

fn cmd_evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<Outputs, CliError> {
    let panel = io::load_panel(&ctx.data_path(&a.common.data)?, UnitMode::Percent)?;
    let names = ctx.models(&a.model);
    let factories = names.iter().map(|n| ctx.factory(n, &a.common)).collect::<Result<Vec<_>, _>>()?;
    match a.kind {
        EvalKind::Rolling => {
            let r = &ctx.config.rolling;
            let spec = RollingSpec {
                window: a.window.unwrap_or(r.window),
                horizons: a.horizons.clone().unwrap_or_else(|| r.horizons.clone()),
                min_maturity: (r.min_maturity >= 0.0).then_some(r.min_maturity),
            };
            let mut table = eval::MetricTable::default();
            for f in &factories {
                table.extend(eval::rolling_forecast_eval(&panel, f.as_ref(), &spec)?);
            }
            Ok(vec![("metrics.csv".into(), table.to_csv("percent_annual"))])
        }
        EvalKind::Synthesis => {
            let deleted = a.deleted.clone().unwrap_or_else(|| ctx.config.synthesis.deleted.clone());
            let mut cells = String::from("model,deleted,window,maturity_months,rmsfe_percent_annual,extrapolated\n");
            let mut results = Vec::new();
            for &l in &deleted {
                for f in &factories {
                    let res = eval::curve_synthesis_eval(&panel, f.as_ref(), l)?;
                    for c in &res.cells {
                        let _ = writeln!(cells, "{},{},{},{},{:.10},{}", res.model, l, c.window, c.maturity, c.rmsfe, c.extrapolated);
                    }
                    results.push(res);
                }
            }
            let mut outputs = vec![("synthesis_cells.csv".to_string(), cells)];
            let pick = |name: &str, l: usize| results.iter().find(|r| r.model == name && r.deleted == l);
            let pairs: Vec<_> = deleted.iter().filter_map(|&l| Some((pick("fdfm", l)?, pick("dns", l)?))).collect();
            if !pairs.is_empty() {
                outputs.push(("synthesis_ratios_fdfm_over_dns.csv".into(), eval::ratio_table_csv(&pairs)));
            }
            Ok(outputs)
        }
    }
}

fn cmd_backtest(ctx: &Context, a: &BacktestArgs) -> Result<Outputs, CliError> {
    let t = &ctx.config.trading;
    let panel = io::load_panel(&ctx.data_path(&a.common.data)?, UnitMode::MonthlyDecimal)?;
    let algo = a.algo.unwrap_or(t.algorithm);
    let window = a.window.unwrap_or(t.window);
    let stake = a.stake.unwrap_or(t.stake);
    let t1 = a.t1.unwrap_or(t.t1);
    let accounting = if a.simple_returns || t.accounting == "simple" {
        Accounting::Simple
    } else if t.accounting == "log" {
        Accounting::Log
    } else {
        return Err(CliError::Usage(format!("accounting `{}` is not log|simple", t.accounting)));
    };
    if !(1..=3).contains(&algo) {
        return Err(CliError::Usage(format!("--algo {algo} is not 1, 2 or 3")));
    }
    let periods = trading::trading_periods(panel.n(), window);
    if periods.is_empty() {
        return Err(TradingError::Setup(format!("{} rows leave no trading period after a {window}-month window", panel.n())).into());
    }
    let mut universe = trading::weighted_pairs_set();
    universe.extend(trading::fixed_pairs_set());
    universe.push(t1);
    universe.sort_by(f64::total_cmp);
    universe.dedup();

    let mut outputs = Outputs::new();
    let mut grids = Vec::new();
    for name in ctx.models(&a.model) {
        let factory;
        let forecaster: Box<dyn YieldForecaster + '_> = if name == "perfect" {
            Box::new(PerfectForesight)
        } else {
            factory = ctx.factory(&name, &a.common)?;
            // models are tuned on percent yields
            Box::new(ModelForecaster::new(factory.as_ref(), window).with_scale(1200.0))
        };
        let book = ReturnBook::build(&panel, forecaster.as_ref(), &periods, &universe)?;
        let ledger = match algo {
            1 => {
                let partners = &trading::weighted_pairs_set()[1..];
                let rows = match t.weight_rows {
                    Some([s, e]) => s..e + 1,
                    None => trading::default_weight_rows(&panel, window),
                };
                let weights = trading::pair_weights(&panel, rows, 4.0, partners)?;
                Some(trading::algo1_weighted_pairs(&book, 4.0, partners, &weights, stake, accounting)?)
            }
            2 => Some(trading::algo2_optimal_pairs(&book, t1, &trading::optimal_pairs_set(), stake, accounting)?),
            _ => {
                let grid = trading::algo3_fixed_pairs(&book, &trading::fixed_pairs_set(), stake, accounting)?;
                outputs.push((format!("pair_grid_{name}.csv"), trading::winner_grid_csv(std::slice::from_ref(&grid))));
                // the oracle is reported but never wins a cell
                if name != "perfect" {
                    grids.push(grid);
                }
                None
            }
        };
        if let Some(ledger) = ledger {
            outputs.push((format!("ledger_algo{algo}_{name}.csv"), ledger.to_csv()));
            outputs.push((format!("summary_algo{algo}_{name}.json"), ledger.summary_text()));
        }
    }
    if !grids.is_empty() {
        outputs.push(("winner_grid.csv".into(), trading::winner_grid_csv(&grids)));
    }
    Ok(outputs)
}

fn cmd_simulate(ctx: &Context, a: &SimulateArgs) -> Result<Outputs, CliError> {
    let s = &ctx.config.simulate;
    let k = a.factors.unwrap_or(s.factors);
    let phi = a.phi.clone().unwrap_or_else(|| s.phi.clone());
    if k == 0 || phi.is_empty() {
        return Err(CliError::Usage("simulation needs K >= 1 and at least one phi".into()));
    }
    let spec = SimSpec::standard(k, a.n.unwrap_or(s.n), a.m.unwrap_or(s.m), &phi, a.sigma.unwrap_or(s.sigma));
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let sim = sim::simulate(&spec, &mut rng)?;
    let mut loadings = String::from("maturity_months");
    for c in 0..k {
        let _ = write!(loadings, ",loading_{}", c + 1);
    }
    loadings.push('\n');
    for (j, t) in spec.maturities.iter().enumerate() {
        let _ = write!(loadings, "{t}");
        for c in 0..k {
            let _ = write!(loadings, ",{:.16e}", sim.loadings[(c, j)]);
        }
        loadings.push('\n');
    }
    let mut params = KeyedDocument::new();
    params.push_display("seed", ctx.seed);
    params.push_float("sigma", spec.sigma);
    for (c, f) in spec.factors.iter().enumerate() {
        params.push_floats(&format!("factor.{c}.coefficients"), &f.coefficients);
        params.push_float(&format!("factor.{c}.intercept"), f.intercept);
        params.push_float(&format!("factor.{c}.innovation_variance"), f.innovation_variance);
    }
    Ok(vec![
        ("panel.csv".into(), io::panel_to_csv(&sim.panel, UnitMode::Percent)),
        ("true_loadings.csv".into(), loadings),
        ("true_params.txt".into(), params.render("simulation truth")),
    ])
}

/// Parse a loadings CSV written by `simulate` or `fit` into a K×m matrix at
/// the listed maturities.
pub fn read_loadings_csv(text: &str) -> Result<(Vec<f64>, nalgebra::DMatrix<f64>), CliError> {
    let mut rows = Vec::new();
    let mut mats = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let mut fields = line.split(',').map(|f| f.parse::<f64>());
        let bad = || CliError::Usage(format!("malformed loadings line `{line}`"));
        mats.push(fields.next().ok_or_else(bad)?.map_err(|_| bad())?);
        rows.push(fields.collect::<Result<Vec<f64>, _>>().map_err(|_| bad())?);
    }
    let k = rows.first().map_or(0, Vec::len);
    Ok((mats, nalgebra::DMatrix::from_fn(k, rows.len(), |c, j| rows[j][c])))
}
