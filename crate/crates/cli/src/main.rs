use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use tailcal::backtest::{run_backtest, BacktestOutput};
use tailcal::calibration::{calibrate, CalibrationProblem, CalibrationResult};
use tailcal::evaluation::{eta_grid, murphy_diagram, BootstrapConfig};
use tailcal::io::{
    average_score_table, backtest_table, coverage_table, emit_json, emit_report, epa_table,
    format_level, hash_json, load_json, load_market, load_series, log_returns, murphy_table,
    output_path, trading_table, write_series, Cell, ExperimentConfig, ReportFormat, SeriesFile,
    Table,
};
use tailcal::scoring::VarEsPair;
use tailcal::simulation::{derive_seed, simulate, DgpSpec};
use tailcal::trading::{evaluate_strategies, TradingConfig};
use tailcal::ModelParams;

#[derive(Parser)]
#[command(
    name = "tailcal",
    version,
    about = "Score-calibrated predictive distributions for risk management"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the root seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Report format for tables.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Format {
    fn report(self) -> ReportFormat {
        match self {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }

    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate series from the configured data generating process.
    Simulate,
    /// Calibrate the model to every configured score on a full series.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Expanding-window out-of-sample forecasts for every calibrated score.
    Backtest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Coverage tests, equal-predictive-ability tests and Murphy diagrams for a backtest.
    Evaluate {
        /// `backtest.json` written by the backtest subcommand.
        #[arg(long)]
        input: PathBuf,
    },
    /// VIX-futures hedging strategies on aligned market data.
    Trade {
        /// CSV with date,stock_return,risk_free,vix,futures_open,futures_close.
        #[arg(long)]
        input: PathBuf,
    },
    /// Convert a price series to continuously compounded percentage returns.
    Returns {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Returns { input, output } => returns(input, output),
        Command::Simulate => simulate_cmd(&load_config(g)?, g),
        Command::Calibrate { input } => calibrate_cmd(&load_config(g)?, g, input),
        Command::Backtest { input } => backtest_cmd(&load_config(g)?, g, input),
        Command::Evaluate { input } => evaluate_cmd(&load_config(g)?, g, input),
        Command::Trade { input } => trade_cmd(&load_config(g)?, g, input),
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let path = g
        .config
        .as_ref()
        .context("--config is required for this subcommand")?;
    let mut cfg =
        ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out(g: &Global, name: &str) -> Result<PathBuf> {
    output_path(&g.out_dir, name).with_context(|| format!("creating {}", g.out_dir.display()))
}

fn returns(input: &Path, output: &Path) -> Result<()> {
    let prices = load_series(input).with_context(|| format!("reading {}", input.display()))?;
    let r = log_returns(&prices)?;
    let hash = hash_json(&serde_json::to_string(&("returns", &prices))?);
    write_series(output, &r, &hash).with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}

fn simulate_cmd(cfg: &ExperimentConfig, g: &Global) -> Result<()> {
    let sim = cfg
        .simulation
        .as_ref()
        .context("configuration has no simulation section")?;
    let hash = cfg.hash()?;
    let specs: Vec<DgpSpec> = (0..sim.replications)
        .map(|r| DgpSpec {
            scenario: sim.scenario,
            length: sim.length,
            seed: derive_seed(cfg.seed, r as u64),
        })
        .collect();
    let series = specs
        .par_iter()
        .map(simulate)
        .collect::<tailcal::Result<Vec<_>>>()?;
    for (r, (spec, values)) in specs.iter().zip(series).enumerate() {
        write_series(
            out(g, &format!("sim_{r:03}.csv"))?,
            &SeriesFile::from_values(values),
            &hash,
        )?;
        emit_json(spec, out(g, &format!("sim_{r:03}.json"))?, &hash)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CalibrationEntry {
    score: String,
    #[serde(flatten)]
    result: CalibrationResult,
}

fn calibrate_cmd(cfg: &ExperimentConfig, g: &Global, input: &Path) -> Result<()> {
    let series = load_series(input).with_context(|| format!("reading {}", input.display()))?;
    let hash = cfg.hash()?;
    let bt = &cfg.backtest;
    let results = bt
        .scores_to_calibrate
        .par_iter()
        .map(|score| {
            calibrate(&CalibrationProblem {
                model: bt.model,
                score: *score,
                data: series.values.clone(),
                initial_params: None,
            })
            .map(|result| CalibrationEntry {
                score: score.to_string(),
                result,
            })
        })
        .collect::<tailcal::Result<Vec<_>>>()?;

    let mut table = Table::new(["score", "parameter", "value"]);
    for e in &results {
        for (name, v) in param_fields(&e.result.params) {
            table.push(vec![Cell::text(&e.score), Cell::text(name), Cell::Float(v)]);
        }
        table.push(vec![
            Cell::text(&e.score),
            Cell::text("criterion"),
            Cell::Float(e.result.criterion_value),
        ]);
        table.push(vec![
            Cell::text(&e.score),
            Cell::text("converged"),
            Cell::Bool(e.result.converged),
        ]);
        table.push(vec![
            Cell::text(&e.score),
            Cell::text("at_boundary"),
            Cell::Bool(e.result.at_boundary),
        ]);
    }
    emit_report(
        &table,
        g.format.report(),
        out(g, &format!("calibration.{}", g.format.ext()))?,
        &hash,
    )?;
    emit_json(&results, out(g, "calibration_full.json")?, &hash)?;
    Ok(())
}

fn param_fields(p: &ModelParams) -> Vec<(&'static str, f64)> {
    match p {
        ModelParams::Garch(p) => vec![
            ("mu", p.mu),
            ("alpha0", p.alpha0),
            ("alpha1", p.alpha1),
            ("beta1", p.beta1),
        ],
        ModelParams::HarGarch(p) => vec![
            ("beta0", p.beta[0]),
            ("beta1", p.beta[1]),
            ("beta2", p.beta[2]),
            ("beta3", p.beta[3]),
            ("alpha0", p.alpha0),
            ("alpha1", p.alpha1),
            ("alpha2", p.alpha2),
        ],
    }
}

#[derive(Serialize, serde::Deserialize)]
struct BacktestFile {
    dates: Vec<String>,
    output: BacktestOutput,
}

fn backtest_cmd(cfg: &ExperimentConfig, g: &Global, input: &Path) -> Result<()> {
    let series = load_series(input).with_context(|| format!("reading {}", input.display()))?;
    let hash = cfg.hash()?;
    let output = run_backtest(&cfg.backtest, &series.values)?;
    for run in &output.runs {
        let table = backtest_table(&output, &run.score, Some(&series.dates))?;
        let name = format!(
            "backtest_{}.{}",
            file_label(&run.score.to_string()),
            g.format.ext()
        );
        emit_report(&table, g.format.report(), out(g, &name)?, &hash)?;
    }
    let summary = average_score_table(&output);
    emit_report(
        &summary,
        g.format.report(),
        out(g, &format!("average_scores.{}", g.format.ext()))?,
        &hash,
    )?;
    emit_json(
        &BacktestFile {
            dates: series.dates,
            output,
        },
        out(g, "backtest.json")?,
        &hash,
    )?;
    Ok(())
}

fn file_label(s: &str) -> String {
    s.replace('.', "_")
}

fn evaluate_cmd(cfg: &ExperimentConfig, g: &Global, input: &Path) -> Result<()> {
    let (source_hash, file): (String, BacktestFile) =
        load_json(input).with_context(|| format!("reading {}", input.display()))?;
    let hash = cfg.hash()?;
    if source_hash != hash {
        eprintln!(
            "warning: {} was produced by a different configuration ({source_hash})",
            input.display()
        );
    }
    let output = &file.output;
    let ext = g.format.ext();
    emit_report(
        &coverage_table(output)?,
        g.format.report(),
        out(g, &format!("coverage.{ext}"))?,
        &hash,
    )?;
    let ev = &cfg.evaluation;
    emit_report(
        &epa_table(output, &ev.benchmark)?,
        g.format.report(),
        out(g, &format!("epa.{ext}"))?,
        &hash,
    )?;

    let levels = if ev.murphy_levels.is_empty() {
        output.var_levels.clone()
    } else {
        ev.murphy_levels.clone()
    };
    let bench = output.run(&ev.benchmark)?;
    let mut jobs = Vec::new();
    for (li, &p) in levels.iter().enumerate() {
        let k = output
            .level_index(p)
            .with_context(|| format!("Murphy level {p} is not among the backtest VaR levels"))?;
        for (ri, run) in output
            .runs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.score != ev.benchmark)
        {
            jobs.push((li, p, k, ri, run));
        }
    }
    let curves = jobs
        .par_iter()
        .map(|&(li, p, k, ri, run)| {
            let pairs = |recs: &[tailcal::backtest::BacktestRecord]| {
                recs.iter()
                    .map(|r| VarEsPair::new(r.var[k], r.es[k]))
                    .collect::<tailcal::Result<Vec<_>>>()
            };
            let a = pairs(&run.records)?;
            let b = pairs(&bench.records)?;
            let y: Vec<f64> = run.records.iter().map(|r| r.realized).collect();
            let grid = eta_grid(&y, ev.eta_points);
            let boot = BootstrapConfig {
                seed: derive_seed(cfg.seed, (li * output.runs.len() + ri) as u64),
                ..ev.bootstrap.clone()
            };
            let curve = murphy_diagram(&a, &b, &y, p, &grid, &boot)?;
            Ok((p, run.score, curve))
        })
        .collect::<tailcal::Result<Vec<_>>>()?;
    for (p, score, curve) in curves {
        let name = format!(
            "murphy_{}_vs_{}_{}.{ext}",
            file_label(&score.to_string()),
            file_label(&ev.benchmark.to_string()),
            file_label(&format_level(p))
        );
        emit_report(
            &murphy_table(&curve),
            g.format.report(),
            out(g, &name)?,
            &hash,
        )?;
    }
    Ok(())
}

fn trade_cmd(cfg: &ExperimentConfig, g: &Global, input: &Path) -> Result<()> {
    let data = load_market(input).with_context(|| format!("reading {}", input.display()))?;
    let settings = cfg
        .trading
        .as_ref()
        .context("configuration has no trading section")?;
    if settings.strategies.is_empty() {
        bail!("no strategies configured");
    }
    let hash = cfg.hash()?;
    let rows = evaluate_strategies(
        &data,
        &TradingConfig {
            backtest: cfg.backtest.clone(),
            strategies: settings.strategies.clone(),
            periods_per_year: settings.periods_per_year,
        },
    )?;
    let ext = g.format.ext();
    emit_report(
        &trading_table(&rows),
        g.format.report(),
        out(g, &format!("trading.{ext}"))?,
        &hash,
    )?;
    Ok(())
}
