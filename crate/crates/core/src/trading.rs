//! VIX-futures hedging rules layered on a stock portfolio, and their
//! performance statistics.
//!
//! A strategy holds `1 - w` in the stock portfolio and, on signal days, `w`
//! in a front-month VIX futures position opened at the open and closed at
//! the close. The signal for day `d` uses only the predictive for
//! `ln VIX_d` built from data through day `d - 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backtest::{run_backtest, BacktestConfig, BacktestRecord};
use crate::error::{Error, Result};
use crate::models::{gaussian_var, prob_exceed, GaussianPredictive};

pub const TRADING_DAYS: f64 = 252.0;

/// Aligned daily market observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketData {
    pub dates: Vec<String>,
    /// Decimal daily stock portfolio return.
    pub stock_return: Vec<f64>,
    /// Decimal per-day risk-free rate.
    pub risk_free: Vec<f64>,
    /// VIX level in index points.
    pub vix: Vec<f64>,
    pub futures_open: Vec<f64>,
    pub futures_close: Vec<f64>,
}

impl MarketData {
    pub fn new(
        dates: Vec<String>,
        stock_return: Vec<f64>,
        risk_free: Vec<f64>,
        vix: Vec<f64>,
        futures_open: Vec<f64>,
        futures_close: Vec<f64>,
    ) -> Result<Self> {
        let data = Self {
            dates,
            stock_return,
            risk_free,
            vix,
            futures_open,
            futures_close,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dates.len();
        for len in [
            self.stock_return.len(),
            self.risk_free.len(),
            self.vix.len(),
            self.futures_open.len(),
            self.futures_close.len(),
        ] {
            if len != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: len,
                });
            }
        }
        if let Some(i) = self.dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "dates must be strictly increasing ({} followed by {})",
                self.dates[i],
                self.dates[i + 1]
            )));
        }
        for col in [&self.stock_return, &self.risk_free] {
            if let Some(index) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        for col in [&self.vix, &self.futures_open, &self.futures_close] {
            if let Some(i) = col.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "prices must be finite and positive (row {i}: {})",
                    col[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TradingRule {
    /// Hedge when `Pr(VIX_{d} > VIX_{d-1}) > prob_threshold`.
    Probability,
    /// Hedge when the `percentile` predictive quantile of VIX exceeds `level_threshold`.
    Percentile,
    /// Hedge every day.
    Static,
}

/// Where the hedge weight sits on days without a signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdleAllocation {
    #[default]
    Cash,
    Stock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategySpec {
    pub rule: TradingRule,
    pub hedge_weight: f64,
    pub prob_threshold: f64,
    pub percentile: f64,
    pub level_threshold: f64,
    pub idle: IdleAllocation,
}

impl Default for StrategySpec {
    fn default() -> Self {
        Self {
            rule: TradingRule::Static,
            hedge_weight: 0.05,
            prob_threshold: 0.5,
            percentile: 0.8,
            level_threshold: 40.0,
            idle: IdleAllocation::Cash,
        }
    }
}

impl StrategySpec {
    pub fn with_rule(rule: TradingRule) -> Self {
        Self {
            rule,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hedge_weight) {
            return Err(Error::InvalidParams(format!(
                "hedge weight {} outside [0, 1]",
                self.hedge_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.prob_threshold) {
            return Err(Error::Domain(self.prob_threshold));
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(Error::Domain(self.percentile));
        }
        if !(self.level_threshold.is_finite() && self.level_threshold > 0.0) {
            return Err(Error::InvalidParams(format!(
                "level threshold {}",
                self.level_threshold
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self.rule {
            TradingRule::Probability => "probability",
            TradingRule::Percentile => "percentile",
            TradingRule::Static => "static",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioStats {
    pub mean_excess: f64,
    pub std_dev: f64,
    /// `None` when the excess returns have zero variance.
    pub sharpe: Option<f64>,
}

/// `pred` is the predictive for tomorrow's log VIX.
pub fn signal_probability_rule(
    pred: &GaussianPredictive,
    vix_today: f64,
    threshold: f64,
) -> Result<u8> {
    if !(vix_today.is_finite() && vix_today > 0.0) {
        return Err(Error::Domain(vix_today));
    }
    Ok(u8::from(prob_exceed(pred, vix_today.ln())? > threshold))
}

/// The log-scale quantile is mapped back to index points through `exp`.
pub fn signal_percentile_rule(
    pred: &GaussianPredictive,
    percentile: f64,
    level_threshold: f64,
) -> Result<u8> {
    Ok(u8::from(
        gaussian_var(pred, percentile)?.exp() > level_threshold,
    ))
}

/// Signals for days whose log-VIX predictives are `preds`; `prev_vix[i]` is
/// the VIX level on the day before the one `preds[i]` targets.
pub fn compute_signals(
    spec: &StrategySpec,
    preds: &[GaussianPredictive],
    prev_vix: &[f64],
) -> Result<Vec<u8>> {
    spec.validate()?;
    if preds.len() != prev_vix.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: prev_vix.len(),
        });
    }
    preds
        .iter()
        .zip(prev_vix)
        .map(|(pred, &v)| match spec.rule {
            TradingRule::Probability => signal_probability_rule(pred, v, spec.prob_threshold),
            TradingRule::Percentile => {
                signal_percentile_rule(pred, spec.percentile, spec.level_threshold)
            }
            TradingRule::Static => Ok(1),
        })
        .collect()
}

/// Daily portfolio returns. `signals` is ignored by the static rule.
pub fn run_strategy(data: &MarketData, spec: &StrategySpec, signals: &[u8]) -> Result<Vec<f64>> {
    data.validate()?;
    spec.validate()?;
    if spec.rule != TradingRule::Static && signals.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: signals.len(),
            right: data.len(),
        });
    }
    let w = spec.hedge_weight;
    Ok((0..data.len())
        .map(|d| {
            let on = spec.rule == TradingRule::Static || signals[d] == 1;
            let stock = data.stock_return[d];
            if on {
                (1.0 - w) * stock + w * (data.futures_close[d] / data.futures_open[d] - 1.0)
            } else {
                match spec.idle {
                    IdleAllocation::Cash => (1.0 - w) * stock + w * data.risk_free[d],
                    IdleAllocation::Stock => stock,
                }
            }
        })
        .collect())
}

pub fn portfolio_stats(returns: &[f64], risk_free: &[f64]) -> Result<PortfolioStats> {
    portfolio_stats_with(returns, risk_free, TRADING_DAYS)
}

/// Annualised mean and standard deviation (sample, `n - 1`) of excess
/// returns and their ratio.
pub fn portfolio_stats_with(
    returns: &[f64],
    risk_free: &[f64],
    periods_per_year: f64,
) -> Result<PortfolioStats> {
    if returns.len() != risk_free.len() {
        return Err(Error::LengthMismatch {
            left: returns.len(),
            right: risk_free.len(),
        });
    }
    let n = returns.len();
    if n < 2 {
        return Err(Error::InsufficientHistory { needed: 2, got: n });
    }
    if !(periods_per_year.is_finite() && periods_per_year > 0.0) {
        return Err(Error::InvalidParams(format!(
            "periods per year {periods_per_year}"
        )));
    }
    let excess: Vec<f64> = returns.iter().zip(risk_free).map(|(r, f)| r - f).collect();
    if let Some(index) = excess.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mean = excess.iter().sum::<f64>() / n as f64;
    let var = excess.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let mean_excess = periods_per_year * mean;
    let std_dev = (periods_per_year * var).sqrt();
    let constant = excess.iter().all(|&x| x == excess[0]);
    let sharpe = if constant || std_dev == 0.0 {
        None
    } else {
        Some(mean_excess / std_dev)
    };
    Ok(PortfolioStats {
        mean_excess,
        std_dev,
        sharpe,
    })
}

/// Log-VIX predictives for the backtested days, paired with the previous day's VIX.
pub fn predictives_from_records(
    records: &[BacktestRecord],
    vix: &[f64],
) -> Result<(Vec<GaussianPredictive>, Vec<f64>)> {
    let mut preds = Vec::with_capacity(records.len());
    let mut prev = Vec::with_capacity(records.len());
    for r in records {
        if r.date_index == 0 || r.date_index >= vix.len() {
            return Err(Error::InvalidInput(format!(
                "record date {} outside the VIX series",
                r.date_index
            )));
        }
        preds.push(GaussianPredictive::new(r.mean, r.sd)?);
        prev.push(vix[r.date_index - 1]);
    }
    Ok((preds, prev))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingConfig {
    /// Backtest of the log-VIX predictive; its holdout defines the trading days.
    pub backtest: BacktestConfig,
    pub strategies: Vec<StrategySpec>,
    #[serde(default = "default_periods")]
    pub periods_per_year: f64,
}

fn default_periods() -> f64 {
    TRADING_DAYS
}

/// One row of the performance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: String,
    /// Score the predictive was calibrated to; `None` for the static rule.
    pub calibration: Option<String>,
    pub signal_days: usize,
    pub stats: PortfolioStats,
}

/// Backtests the log-VIX predictive on the market data and evaluates every
/// dynamic strategy under every calibrated predictive, plus the static rule
/// once, over the holdout days.
pub fn evaluate_strategies(data: &MarketData, config: &TradingConfig) -> Result<Vec<StrategyRow>> {
    data.validate()?;
    for s in &config.strategies {
        s.validate()?;
    }
    let log_vix: Vec<f64> = data.vix.iter().map(|v| v.ln()).collect();
    let output = run_backtest(&config.backtest, &log_vix)?;
    let start = data.len() - config.backtest.holdout;
    let window = slice_market(data, start);

    let mut jobs: Vec<(StrategySpec, Option<usize>)> = Vec::new();
    for s in &config.strategies {
        if s.rule == TradingRule::Static {
            jobs.push((*s, None));
        } else {
            jobs.extend((0..output.runs.len()).map(|i| (*s, Some(i))));
        }
    }
    jobs.par_iter()
        .map(|(spec, run)| {
            let signals = match run {
                None => vec![1; window.len()],
                Some(i) => {
                    let (preds, prev) =
                        predictives_from_records(&output.runs[*i].records, &data.vix)?;
                    compute_signals(spec, &preds, &prev)?
                }
            };
            let returns = run_strategy(&window, spec, &signals)?;
            Ok(StrategyRow {
                strategy: spec.label().to_string(),
                calibration: run.map(|i| output.runs[i].score.to_string()),
                signal_days: signals.iter().map(|&s| s as usize).sum(),
                stats: portfolio_stats_with(&returns, &window.risk_free, config.periods_per_year)?,
            })
        })
        .collect()
}

fn slice_market(data: &MarketData, start: usize) -> MarketData {
    MarketData {
        dates: data.dates[start..].to_vec(),
        stock_return: data.stock_return[start..].to_vec(),
        risk_free: data.risk_free[start..].to_vec(),
        vix: data.vix[start..].to_vec(),
        futures_open: data.futures_open[start..].to_vec(),
        futures_close: data.futures_close[start..].to_vec(),
    }
}
