mod config;
mod inputs;
mod output;
mod tables;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use memkit::diagnostics::{diagnose, DiagnosticsReport, DEFAULT_LAGS};
use memkit::dist::{calibrate, gof_table, DistKind};
use memkit::ingest::{write_panel_csv, DEFAULT_ANNUALIZATION_DAYS, DEFAULT_DATE_FORMAT};
use memkit::mem;
use memkit::sim::{simulate, DgpSpec, TauProfile};
use memkit::smoother::SmootherConfig;
use memkit::spfit::{fit_model, SpFitOptions};
use memkit::vmem::{heavy_restriction, vforecast, wald_test};
use memkit::{AlignedPanel, FitResult, ModelKind, Params, UniParams};
use serde::Serialize;

use config::{conversion_kind, parse_conversion, parse_kind, parse_lags, parse_positive, Conversion, RunConfig};
use inputs::{load_panel, DataSpec};
use output::{num, Staging};

#[derive(Parser)]
#[command(name = "memkit", version, about = "Fit, diagnose, forecast and simulate multiplicative error models")]
struct Cli {
    /// JSON file with default settings; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress of the estimation
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a model and write estimates, components and diagnostics
    Fit(FitArgs),
    /// Goodness-of-fit tests of residuals against the four error densities
    Gof(GofArgs),
    /// Multi-step forecasts of the conditional mean
    Forecast(ForecastArgs),
    /// Draw a synthetic panel in the layout the other commands read
    Simulate(SimArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV input file (repeatable)
    #[arg(long = "input", short = 'i')]
    inputs: Vec<PathBuf>,
    /// Value columns to use, comma separated (default: all non-date, non-return columns)
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    #[arg(long)]
    date_column: Option<String>,
    #[arg(long)]
    date_format: Option<String>,
    /// Column with signed returns; its sign drives the asymmetry term
    #[arg(long)]
    returns_column: Option<String>,
    /// Unit conversion COLUMN=arvol (daily returns) or COLUMN=rkvol (realized-kernel variance)
    #[arg(long, value_parser = |s: &str| parse_conversion(s).map_err(|e| e.to_string()))]
    convert: Vec<(String, Conversion)>,
    #[arg(long, value_parser = parse_positive)]
    annualization_days: Option<f64>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// mem | spmem | vmem | spvmem
    #[arg(long, value_parser = parse_kind)]
    kind: Option<ModelKind>,
    /// Kernel bandwidth in months of 21 trading days (semiparametric kinds)
    #[arg(long, value_parser = parse_positive)]
    bandwidth_months: Option<f64>,
    /// Ljung-Box lags, comma separated
    #[arg(long, value_parser = parse_lags)]
    lags: Option<::std::vec::Vec<usize>>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Wald zero-restriction test: `heavy` or comma-separated parameter positions
    #[arg(long)]
    wald: Option<String>,
    /// Degrees of freedom of the Wald test (default: number of restrictions)
    #[arg(long)]
    wald_df: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GofArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Error variance used for calibration (default: mean squared deviation from one)
    #[arg(long, value_parser = parse_positive)]
    sigma2: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Largest horizon H; forecasts are written for 1..=H
    #[arg(long, value_parser = parse_horizon)]
    horizons: Option<usize>,
    /// Reuse a fit written by `fit` instead of estimating again
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// JSON simulation spec; the flags below describe a univariate process otherwise
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, short = 'n', default_value_t = 3000)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.9)]
    persistence: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 0.2, value_parser = parse_positive)]
    sigma2: f64,
    /// gamma | lognormal | betaprime | loglogistic
    #[arg(long, default_value = "gamma", value_parser = parse_dist)]
    dist: DistKind,
    #[arg(long, default_value_t = 15.0, value_parser = parse_positive)]
    mu: f64,
    /// Amplitude of a cosine low-frequency path (0 for none)
    #[arg(long, default_value_t = 0.0)]
    tau_amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    tau_periods: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_dist(s: &str) -> std::result::Result<DistKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "gamma" => Ok(DistKind::Gamma),
        "lognormal" | "log-n" => Ok(DistKind::LogNormal),
        "betaprime" | "beta'" => Ok(DistKind::BetaPrime),
        "loglogistic" | "log-l" => Ok(DistKind::LogLogistic),
        _ => Err(format!("unknown distribution '{s}'")),
    }
}

fn data_spec(args: &DataArgs, cfg: &RunConfig) -> Result<DataSpec> {
    let mut convert = BTreeMap::new();
    for (col, how) in &cfg.convert {
        convert.insert(col.clone(), conversion_kind(how)?);
    }
    for (col, how) in &args.convert {
        convert.insert(col.clone(), *how);
    }
    Ok(DataSpec {
        inputs: if args.inputs.is_empty() { cfg.inputs.clone() } else { args.inputs.clone() },
        columns: if args.columns.is_empty() { cfg.columns.clone() } else { args.columns.clone() },
        date_column: args.date_column.clone().or(cfg.date_column.clone()).unwrap_or_else(|| "date".into()),
        date_format: args.date_format.clone().or(cfg.date_format.clone()).unwrap_or_else(|| DEFAULT_DATE_FORMAT.into()),
        returns_column: args.returns_column.clone().or(cfg.returns_column.clone()).unwrap_or_else(|| "return".into()),
        convert,
        annualization_days: args.annualization_days.or(cfg.annualization_days).unwrap_or(DEFAULT_ANNUALIZATION_DAYS),
    })
}

fn out_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."))
}

struct Fitted {
    panel: AlignedPanel,
    fit: FitResult,
    diagnostics: DiagnosticsReport,
}

fn run_fit(data: &DataArgs, model: &ModelArgs, cfg: &RunConfig) -> Result<Fitted> {
    let kind = model.kind.or(cfg.kind).context("no model kind given (use --kind)")?;
    let bandwidth = model.bandwidth_months.or(cfg.bandwidth_months);
    if kind.is_semiparametric() && bandwidth.is_none() {
        bail!("--bandwidth-months is required for {kind}");
    }
    let lags = model.lags.clone().or(cfg.lags.clone()).unwrap_or_else(|| DEFAULT_LAGS.to_vec());
    let panel = load_panel(&data_spec(data, cfg)?)?;
    if !kind.is_multivariate() && panel.n_series() != 1 {
        bail!("{kind} takes one series but {} columns were selected (use --columns)", panel.n_series());
    }
    let opts = SpFitOptions::new(SmootherConfig::from_months(bandwidth.unwrap_or(1.0))?);
    tracing::info!(%kind, series = panel.n_series(), observations = panel.n_obs(), "fitting");
    let mut fit = fit_model(kind, &panel, &opts)?;
    if !fit.converged {
        tracing::warn!(iterations = fit.outer_iterations, "alternation stopped at the iteration cap");
    }
    let diagnostics = diagnose(&fit, &lags)?;
    fit.diagnostics = Some(diagnostics.clone());
    Ok(Fitted { panel, fit, diagnostics })
}

#[derive(Serialize)]
struct WaldReport {
    positions: Vec<usize>,
    parameters: Vec<String>,
    statistic: f64,
    df: usize,
    pvalue: f64,
}

fn wald_positions(spec: &str, fit: &FitResult) -> Result<Vec<usize>> {
    if spec.eq_ignore_ascii_case("heavy") {
        if !matches!(fit.params, Params::Vec(_)) {
            bail!("the heavy restriction needs a vector model");
        }
        return Ok(heavy_restriction(fit.n_series()));
    }
    spec.split(',')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad Wald position '{p}'")))
        .collect()
}

fn cmd_fit(args: &FitArgs, cfg: &RunConfig) -> Result<()> {
    let Fitted { panel, fit, diagnostics } = run_fit(&args.data, &args.model, cfg)?;
    let wald = match &args.wald {
        None => None,
        Some(spec) => {
            let pos = wald_positions(spec, &fit)?;
            let df = args.wald_df.unwrap_or(pos.len());
            let w = wald_test(&fit, &pos, df)?;
            let names = fit.params.param_names();
            let parameters = pos.iter().map(|&i| names.get(i).cloned().unwrap_or_default()).collect();
            Some(WaldReport { positions: pos, parameters, statistic: w.statistic, df: w.df, pvalue: w.pvalue })
        }
    };

    let mut stage = Staging::new(&out_dir(&args.out, cfg))?;
    stage.json("fit.json", &fit)?;
    let rows = tables::estimate_rows(&fit, &diagnostics);
    stage.csv("estimates.csv", &tables::EstimateRow::header(), &rows.iter().map(|r| r.cells()).collect::<Vec<_>>())?;
    stage.json("estimates.json", &rows)?;
    let (h, body) = tables::component_table(&fit, panel.values());
    stage.csv("components.csv", &h, &body)?;
    let (h, body) = tables::residual_table(&fit);
    stage.csv("residuals.csv", &h, &body)?;
    if let Some(w) = &wald {
        let header = ["parameters", "statistic", "df", "pvalue"].map(String::from).to_vec();
        let row = vec![w.parameters.join(" "), num(w.statistic), w.df.to_string(), num(w.pvalue)];
        stage.csv("wald.csv", &header, &[row])?;
        stage.json("wald.json", w)?;
    }
    let written = stage.commit()?;

    println!("{} fit on {} observations ({})", fit.model, fit.n_obs(), fit.labels.join(", "));
    for r in &rows {
        match r.zstat {
            Some(z) => println!("  {:<16} {:<10} {:>12.4} {:>10.2}", r.parameter, r.series, r.est, z),
            None => println!("  {:<16} {:<10} {:>12.4}", r.parameter, r.series, r.est),
        }
    }
    if let Some(w) = &wald {
        println!("  Wald {:.4} (df {}) p = {:.4}", w.statistic, w.df, w.pvalue);
    }
    for p in written {
        tracing::info!(path = %p.display(), "wrote");
    }
    Ok(())
}

#[derive(Serialize)]
struct GofOut {
    series: String,
    test: String,
    distribution: String,
    statistic: f64,
    pvalue: f64,
    n_used: usize,
    n_excluded: usize,
}

fn cmd_gof(args: &GofArgs, cfg: &RunConfig) -> Result<()> {
    let panel = load_panel(&data_spec(&args.data, cfg)?)?;
    let mut out = Vec::new();
    for j in 0..panel.n_series() {
        let r = panel.column(j);
        let s2 = match args.sigma2 {
            Some(v) => v,
            None => r.iter().map(|e| (e - 1.0).powi(2)).sum::<f64>() / r.len() as f64,
        };
        let label = &panel.labels()[j];
        for row in gof_table(label, &r, s2).with_context(|| format!("testing '{label}'"))? {
            out.push(GofOut {
                series: row.series,
                test: format!("{:?}", row.test),
                distribution: row.kind.to_string(),
                statistic: row.result.statistic,
                pvalue: row.result.pvalue,
                n_used: row.result.n_used,
                n_excluded: row.result.n_excluded,
            });
        }
    }
    let mut stage = Staging::new(&out_dir(&args.out, cfg))?;
    let header = ["series", "test", "distribution", "statistic", "pvalue", "n_used", "n_excluded"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = out
        .iter()
        .map(|g| {
            vec![
                g.series.clone(),
                g.test.clone(),
                g.distribution.clone(),
                num(g.statistic),
                num(g.pvalue),
                g.n_used.to_string(),
                g.n_excluded.to_string(),
            ]
        })
        .collect();
    stage.csv("gof.csv", &header, &rows)?;
    stage.json("gof.json", &out)?;
    stage.commit()?;
    for g in &out {
        println!("  {:<10} {:<4} {:<6} stat {:>9.4}  p {:.4}", g.series, g.test, g.distribution, g.statistic, g.pvalue);
    }
    Ok(())
}

/// `mu_j tau_T xi_{T+h|T}` for `h = 1..=H`, one vector per horizon.
fn forecast_levels(fit: &FitResult, neg_last: f64, h: usize) -> Result<Vec<Vec<f64>>> {
    let last = fit.n_obs() - 1;
    let xi_t = &fit.xi[last];
    let x_t: Vec<f64> = xi_t.iter().zip(&fit.residuals[last]).map(|(s, e)| s * e).collect();
    let paths = match &fit.params {
        Params::Uni(p) => mem::forecast_path(p, xi_t[0], x_t[0], neg_last, h)?.into_iter().map(|v| vec![v]).collect(),
        Params::Vec(p) => vforecast(p, xi_t, &x_t, neg_last, h)?,
    };
    let tau_t = fit.tau[last];
    Ok(paths.into_iter().map(|f| f.iter().zip(&fit.mu).map(|(s, m)| m * tau_t * s).collect()).collect())
}

fn cmd_forecast(args: &ForecastArgs, cfg: &RunConfig) -> Result<()> {
    let h = args.horizons.or(cfg.horizons).context("no forecast horizon given (use --horizons)")?;
    if h == 0 {
        bail!("the forecast horizon must be at least 1");
    }
    let (panel, fit) = match &args.fit {
        None => {
            let f = run_fit(&args.data, &args.model, cfg)?;
            (f.panel, f.fit)
        }
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let fit: FitResult = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let panel = load_panel(&data_spec(&args.data, cfg)?)?;
            if fit.dates.last() != panel.dates().last() || fit.n_series() != panel.n_series() {
                bail!("the stored fit does not end on the last date of the supplied data");
            }
            (panel, fit)
        }
    };
    let neg_last = *panel.neg_indicator().last().expect("non-empty panel");
    let levels = forecast_levels(&fit, neg_last, h)?;

    let mut header = vec!["horizon".to_string()];
    header.extend(fit.labels.iter().cloned());
    let rows: Vec<Vec<String>> = levels
        .iter()
        .enumerate()
        .map(|(i, l)| std::iter::once((i + 1).to_string()).chain(l.iter().map(|v| num(*v))).collect())
        .collect();
    #[derive(Serialize)]
    struct ForecastOut<'a> {
        origin: String,
        labels: &'a [String],
        forecasts: &'a [Vec<f64>],
    }
    let mut stage = Staging::new(&out_dir(&args.out, cfg))?;
    stage.csv("forecast.csv", &header, &rows)?;
    let origin = fit.dates.last().map(|d| d.to_string()).unwrap_or_default();
    stage.json("forecast.json", &ForecastOut { origin, labels: &fit.labels, forecasts: &levels })?;
    stage.commit()?;
    for (i, l) in levels.iter().enumerate().take(5) {
        println!("  h={:<4} {}", i + 1, l.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join("  "));
    }
    Ok(())
}

fn cmd_simulate(args: &SimArgs, cfg: &RunConfig) -> Result<()> {
    let mut spec: DgpSpec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let tau = if args.tau_amplitude == 0.0 {
                TauProfile::Constant
            } else {
                TauProfile::Sinusoid { amplitude: args.tau_amplitude, periods: args.tau_periods, phase: 0.0 }
            };
            DgpSpec {
                params: Params::Uni(UniParams::from_persistence(args.persistence, args.alpha, args.gamma)?),
                mu: vec![args.mu],
                tau,
                errors: vec![calibrate(args.dist, args.sigma2)?],
                dependence: None,
                neg_prob: 0.5,
                seed: 0,
            }
        }
    };
    if let Some(s) = args.seed.or(cfg.seed) {
        spec.seed = s;
    } else if args.spec.is_none() {
        spec.seed = 1;
    }
    let sim = simulate(&spec, args.n)?;
    let p = &sim.panel;
    let mut stage = Staging::new(&out_dir(&args.out, cfg))?;
    let path = stage.path("simulated.csv");
    write_panel_csv(&path, p.labels(), p.dates(), p.values(), p.returns())?;
    let k = p.n_series();
    let mut header = vec!["date".to_string(), "tau".to_string()];
    for l in p.labels() {
        header.push(format!("xi_{l}"));
    }
    for l in p.labels() {
        header.push(format!("eps_{l}"));
    }
    let rows: Vec<Vec<String>> = (0..p.n_obs())
        .map(|t| {
            let mut r = vec![p.dates()[t].to_string(), num(sim.tau[t])];
            r.extend((0..k).map(|j| num(sim.xi[(t, j)])));
            r.extend((0..k).map(|j| num(sim.eps[(t, j)])));
            r
        })
        .collect();
    stage.csv("truth.csv", &header, &rows)?;
    stage.json("dgp.json", &spec)?;
    stage.commit()?;
    println!("simulated {} observations of {} series (seed {})", p.n_obs(), k, spec.seed);
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MEMKIT_THREADS") {
        let n: usize = v.parse().with_context(|| format!("MEMKIT_THREADS='{v}' is not a count"))?;
        if n == 0 {
            bail!("MEMKIT_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, &cfg),
        Command::Gof(a) => cmd_gof(a, &cfg),
        Command::Forecast(a) => cmd_forecast(a, &cfg),
        Command::Simulate(a) => cmd_simulate(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn parse_horizon(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(h) if h >= 1 => Ok(h),
        _ => Err(format!("'{s}' must be a horizon of at least 1")),
    }
}
