//! File formats, experiment configuration and report emission.
//!
//! Every report starts with a `config_hash` that identifies the configuration
//! that produced it. Floats are written with 17 significant digits so values
//! round-trip exactly and repeated runs are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backtest::{BacktestConfig, BacktestOutput};
use crate::error::{Error, Result};
use crate::evaluation::{christoffersen_cc, gw_test, BootstrapConfig, MurphyCurve};
use crate::scoring::ScoreSpec;
use crate::simulation::Scenario;
use crate::trading::{MarketData, StrategyRow, StrategySpec, TRADING_DAYS};

/// A dated univariate series with strictly increasing ISO-8601 dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFile {
    pub dates: Vec<String>,
    pub values: Vec<f64>,
}

impl SeriesFile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Synthetic consecutive day labels, used for simulated series.
    pub fn from_values(values: Vec<f64>) -> Self {
        let dates = (0..values.len()).map(day_label).collect();
        Self { dates, values }
    }
}

/// Label for the `i`-th simulated day: an ISO date counted from 2000-01-01.
pub fn day_label(i: usize) -> String {
    let origin = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid origin");
    (origin + Days::new(i as u64))
        .format("%Y-%m-%d")
        .to_string()
}

fn is_iso_date(s: &str) -> bool {
    s.len() == 10 && NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: line as usize,
        message: message.into(),
    }
}

fn parse_value(path: &Path, line: u64, field: &str, name: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("{name} {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(
            path,
            line,
            format!("{name} {field:?} is not finite"),
        ));
    }
    Ok(v)
}

// Rows of a CSV file with an optional header whose first field is "date".
// Yields (line number, fields).
fn read_rows(path: &Path, columns: usize) -> Result<Vec<(u64, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if i == 0 && rec.get(0).is_some_and(|f| f.eq_ignore_ascii_case("date")) {
            continue;
        }
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != columns {
            return Err(parse_error(
                path,
                line,
                format!("expected {columns} fields, found {}", rec.len()),
            ));
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(parse_error(path, 1, "file contains no observations"));
    }
    Ok(rows)
}

fn sort_by_date<T>(path: &Path, mut rows: Vec<(u64, String, T)>) -> Result<Vec<(u64, String, T)>> {
    for (line, date, _) in &rows {
        if !is_iso_date(date) {
            return Err(parse_error(
                path,
                *line,
                format!("date {date:?} is not YYYY-MM-DD"),
            ));
        }
    }
    rows.sort_by(|a, b| a.1.cmp(&b.1));
    if let Some(w) = rows.windows(2).find(|w| w[0].1 == w[1].1) {
        return Err(parse_error(
            path,
            w[0].0.max(w[1].0),
            format!(
                "duplicate date {} (also on line {})",
                w[1].1,
                w[0].0.min(w[1].0)
            ),
        ));
    }
    Ok(rows)
}

/// Reads a `date,value` CSV (header optional), validates and sorts it by date.
pub fn load_series(path: impl AsRef<Path>) -> Result<SeriesFile> {
    let path = path.as_ref();
    let mut parsed = Vec::new();
    for (line, f) in read_rows(path, 2)? {
        let v = parse_value(path, line, &f[1], "value")?;
        parsed.push((line, f[0].clone(), v));
    }
    let rows = sort_by_date(path, parsed)?;
    Ok(SeriesFile {
        dates: rows.iter().map(|r| r.1.clone()).collect(),
        values: rows.iter().map(|r| r.2).collect(),
    })
}

pub fn write_series(path: impl AsRef<Path>, series: &SeriesFile, config_hash: &str) -> Result<()> {
    let mut table = Table::new(["date", "value"]);
    for (d, v) in series.dates.iter().zip(&series.values) {
        table.push(vec![Cell::text(d), Cell::Float(*v)]);
    }
    emit_report(&table, ReportFormat::Csv, path, config_hash)
}

/// Reads `date,stock_return,risk_free,vix,futures_open,futures_close`.
pub fn load_market(path: impl AsRef<Path>) -> Result<MarketData> {
    let path = path.as_ref();
    const NAMES: [&str; 5] = [
        "stock_return",
        "risk_free",
        "vix",
        "futures_open",
        "futures_close",
    ];
    let mut parsed = Vec::new();
    for (line, f) in read_rows(path, 6)? {
        let mut vals = [0.0; 5];
        for (k, name) in NAMES.iter().enumerate() {
            vals[k] = parse_value(path, line, &f[k + 1], name)?;
        }
        for k in 2..5 {
            if vals[k] <= 0.0 {
                return Err(parse_error(
                    path,
                    line,
                    format!("{} must be positive", NAMES[k]),
                ));
            }
        }
        parsed.push((line, f[0].clone(), vals));
    }
    let rows = sort_by_date(path, parsed)?;
    let col = |k: usize| rows.iter().map(|r| r.2[k]).collect::<Vec<f64>>();
    MarketData::new(
        rows.iter().map(|r| r.1.clone()).collect(),
        col(0),
        col(1),
        col(2),
        col(3),
        col(4),
    )
}

/// Continuously compounded percentage returns `100 ln(P_t / P_{t-1})`,
/// dated at `t`.
pub fn log_returns(prices: &SeriesFile) -> Result<SeriesFile> {
    if prices.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            got: prices.len(),
        });
    }
    if let Some(i) = prices.values.iter().position(|p| *p <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "price on {} is not positive",
            prices.dates[i]
        )));
    }
    Ok(SeriesFile {
        dates: prices.dates[1..].to_vec(),
        values: prices
            .values
            .windows(2)
            .map(|w| 100.0 * (w[1] / w[0]).ln())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    #[serde(flatten)]
    pub scenario: Scenario,
    pub length: usize,
    #[serde(default = "one")]
    pub replications: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSettings {
    /// Reference predictive that every other calibration is compared against.
    pub benchmark: ScoreSpec,
    /// Levels at which Murphy diagrams are drawn; the VaR levels when empty.
    pub murphy_levels: Vec<f64>,
    pub bootstrap: BootstrapConfig,
    pub eta_points: usize,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            benchmark: ScoreSpec::Ls,
            murphy_levels: Vec::new(),
            bootstrap: BootstrapConfig::default(),
            eta_points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingSettings {
    pub strategies: Vec<StrategySpec>,
    #[serde(default = "trading_days")]
    pub periods_per_year: f64,
}

fn trading_days() -> f64 {
    TRADING_DAYS
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Root seed; per-task seeds are derived from it.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSettings>,
    pub backtest: BacktestConfig,
    #[serde(default)]
    pub evaluation: EvaluationSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trading: Option<TradingSettings>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.backtest.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the compact JSON serialisation, in lowercase hex.
    pub fn hash(&self) -> Result<String> {
        Ok(hash_json(&serde_json::to_string(self)?))
    }
}

pub fn hash_json(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Float formatting used by every report: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Float(f64),
    Int(i64),
    Bool(bool),
    Missing,
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Float(x) => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Text(s) => serde_json::Value::from(s.as_str()).to_string(),
            Cell::Float(x) if x.is_finite() => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Float(_) | Cell::Missing => "null".into(),
        }
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

/// A rectangular report.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Panics if the row width differs from the header.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn render(&self, format: ReportFormat, config_hash: &str) -> Result<String> {
        match format {
            ReportFormat::Csv => {
                let mut w = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(Vec::new());
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::csv))?;
                }
                let body = String::from_utf8(
                    w.into_inner()
                        .map_err(|e| Error::InvalidInput(e.to_string()))?,
                )
                .map_err(|e| Error::InvalidInput(e.to_string()))?;
                Ok(format!("# config_hash={config_hash}\n{body}"))
            }
            ReportFormat::Json => {
                let quote = |s: &str| serde_json::Value::from(s).to_string();
                let mut out = format!(
                    "{{\n  \"config_hash\": {},\n  \"columns\": [",
                    quote(config_hash)
                );
                out += &self
                    .columns
                    .iter()
                    .map(|c| quote(c))
                    .collect::<Vec<_>>()
                    .join(", ");
                out += "],\n  \"rows\": [";
                for (i, row) in self.rows.iter().enumerate() {
                    out += if i == 0 { "\n    [" } else { ",\n    [" };
                    out += &row.iter().map(Cell::json).collect::<Vec<_>>().join(", ");
                    out += "]";
                }
                out += if self.rows.is_empty() {
                    "]\n}\n"
                } else {
                    "\n  ]\n}\n"
                };
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub fn emit_report(
    table: &Table,
    format: ReportFormat,
    path: impl AsRef<Path>,
    config_hash: &str,
) -> Result<()> {
    fs::write(path.as_ref(), table.render(format, config_hash)?)?;
    Ok(())
}

/// Writes `value` as pretty JSON wrapped with the config hash.
pub fn emit_json<T: Serialize>(value: &T, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
    #[derive(Serialize)]
    struct Wrapped<'a, T> {
        config_hash: &'a str,
        data: &'a T,
    }
    let text = serde_json::to_string_pretty(&Wrapped {
        config_hash,
        data: value,
    })?;
    fs::write(path.as_ref(), text + "\n")?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<(String, T)> {
    #[derive(Deserialize)]
    struct Wrapped<T> {
        config_hash: String,
        data: T,
    }
    let w: Wrapped<T> = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok((w.config_hash, w.data))
}

/// Per-date forecasts of one calibrated predictive.
pub fn backtest_table(
    output: &BacktestOutput,
    score: &ScoreSpec,
    dates: Option<&[String]>,
) -> Result<Table> {
    let run = output.run(score)?;
    let pct = |p: &f64| format_level(*p);
    let mut cols: Vec<String> = vec!["date".into(), "realized".into(), "mean".into(), "sd".into()];
    cols.extend(output.var_levels.iter().map(|p| format!("var_{}", pct(p))));
    cols.extend(output.var_levels.iter().map(|p| format!("es_{}", pct(p))));
    cols.extend(
        output
            .evaluation_scores
            .iter()
            .map(|s| format!("score_{s}")),
    );
    cols.push("calibration_failed".into());
    let mut table = Table::new(cols);
    for r in &run.records {
        let date = match dates {
            Some(d) => Cell::text(d.get(r.date_index).cloned().unwrap_or_default()),
            None => Cell::Int(r.date_index as i64),
        };
        let mut row = vec![
            date,
            Cell::Float(r.realized),
            Cell::Float(r.mean),
            Cell::Float(r.sd),
        ];
        row.extend(
            r.var
                .iter()
                .chain(&r.es)
                .chain(&r.scores)
                .map(|v| Cell::Float(*v)),
        );
        row.push(Cell::Bool(r.calibration_failed));
        table.push(row);
    }
    Ok(table)
}

/// Average realised score of every calibrated predictive under every evaluation score.
pub fn average_score_table(output: &BacktestOutput) -> Table {
    let mut cols = vec!["calibration".to_string()];
    cols.extend(output.evaluation_scores.iter().map(ToString::to_string));
    let mut table = Table::new(cols);
    for run in &output.runs {
        let mut row = vec![Cell::text(optimizer_label(&run.score))];
        for k in 0..output.evaluation_scores.len() {
            let n = run.records.len() as f64;
            row.push(Cell::Float(
                run.records.iter().map(|r| r.scores[k]).sum::<f64>() / n,
            ));
        }
        table.push(row);
    }
    table
}

fn optimizer_label(s: &ScoreSpec) -> String {
    if *s == ScoreSpec::Ls {
        "MLE".into()
    } else {
        s.to_string()
    }
}

/// Level as a percentage label: 0.025 -> "2.5".
pub fn format_level(p: f64) -> String {
    let s = format!("{:.4}", p * 100.0);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Exceedance rates with conditional-coverage p-values, one row per
/// optimizer and one column pair per VaR level.
pub fn coverage_table(output: &BacktestOutput) -> Result<Table> {
    let mut cols = vec!["optimizer".to_string()];
    for p in &output.var_levels {
        cols.push(format!("exceed_{}", format_level(*p)));
        cols.push(format!("p_cc_{}", format_level(*p)));
    }
    let mut table = Table::new(cols);
    for run in &output.runs {
        let mut row = vec![Cell::text(optimizer_label(&run.score))];
        for &p in &output.var_levels {
            let hits = output.exceedances(&run.score, p)?;
            let cc = christoffersen_cc(&hits, p)?;
            row.push(Cell::Float(cc.empirical_rate));
            row.push(Cell::Float(cc.p_cc));
        }
        table.push(row);
    }
    Ok(table)
}

/// Average scores of the benchmark predictive and of the predictive
/// calibrated to each column's score, with the equal-predictive-ability test
/// of optimal against benchmark.
pub fn epa_table(output: &BacktestOutput, benchmark: &ScoreSpec) -> Result<Table> {
    let mut cols = vec!["row".to_string()];
    cols.extend(output.evaluation_scores.iter().map(ToString::to_string));
    let mut rows: [Vec<Cell>; 4] = [
        vec![Cell::text(optimizer_label(benchmark))],
        vec![Cell::text("Optimal")],
        vec![Cell::text("gw_statistic")],
        vec![Cell::text("gw_p_value")],
    ];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    for s in &output.evaluation_scores {
        let base = output.score_series(benchmark, s)?;
        rows[0].push(Cell::Float(mean(&base)));
        match output.score_series(s, s) {
            Ok(opt) => {
                rows[1].push(Cell::Float(mean(&opt)));
                let gw = gw_test(&opt, &base)?;
                rows[2].push(Cell::Float(gw.statistic));
                rows[3].push(Cell::Float(gw.p_value));
            }
            Err(_) => rows[1..].iter_mut().for_each(|r| r.push(Cell::Missing)),
        }
    }
    let mut table = Table::new(cols);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

pub fn murphy_table(curve: &MurphyCurve) -> Table {
    let mut table = Table::new(["eta", "delta", "ci_lower", "ci_upper"]);
    for k in 0..curve.eta_grid.len() {
        table.push(vec![
            Cell::Float(curve.eta_grid[k]),
            Cell::Float(curve.delta[k]),
            Cell::Float(curve.ci_lower[k]),
            Cell::Float(curve.ci_upper[k]),
        ]);
    }
    table
}

/// Mean excess return, standard deviation and Sharpe ratio per strategy and calibration.
pub fn trading_table(rows: &[StrategyRow]) -> Table {
    let mut table = Table::new([
        "strategy",
        "calibration",
        "signal_days",
        "mean_excess",
        "std_dev",
        "sharpe",
    ]);
    for r in rows {
        table.push(vec![
            Cell::text(&r.strategy),
            Cell::text(match r.calibration.as_deref() {
                None => "-",
                Some("LS") => "MLE",
                Some(s) => s,
            }),
            Cell::Int(r.signal_days as i64),
            Cell::Float(r.stats.mean_excess),
            Cell::Float(r.stats.std_dev),
            r.stats.sharpe.into(),
        ]);
    }
    table
}

/// `dir/name`, creating `dir` if needed.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}
