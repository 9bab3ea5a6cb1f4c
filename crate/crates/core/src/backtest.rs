//! Expanding-window out-of-sample engine.
//!
//! The last `holdout` observations are forecast one at a time. The forecast
//! for date `t` only sees `y[..t]`: parameters come from the most recent
//! re-estimation (every `reestimation_stride` dates, warm-started from the
//! previous solution) and the filter is always run over the full window with
//! those parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate, default_start, CalibrationProblem, CalibrationResult, MIN_WINDOW,
};
use crate::error::{Error, Result};
use crate::models::{gaussian_es, gaussian_var, ModelKind, ModelParams};
use crate::scoring::{ScoreRule, ScoreSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub model: ModelKind,
    /// Minimum size of the first estimation window.
    pub initial_window: usize,
    /// Number of trailing observations forecast out of sample.
    pub holdout: usize,
    pub reestimation_stride: usize,
    pub scores_to_calibrate: Vec<ScoreSpec>,
    /// Scores recorded for every forecast; defaults to the calibration set.
    #[serde(default)]
    pub evaluation_scores: Vec<ScoreSpec>,
    pub var_levels: Vec<f64>,
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.initial_window < MIN_WINDOW.max(self.model.min_history()) {
            return fail("initial_window below the minimum estimation window");
        }
        if self.holdout == 0 {
            return fail("holdout must be at least 1");
        }
        if self.reestimation_stride == 0 {
            return fail("reestimation_stride must be at least 1");
        }
        if self.scores_to_calibrate.is_empty() {
            return fail("no scores to calibrate");
        }
        if self.var_levels.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return fail("VaR levels must lie in (0, 1)");
        }
        for s in self
            .scores_to_calibrate
            .iter()
            .chain(&self.evaluation_scores)
        {
            s.validate()?;
        }
        Ok(())
    }

    pub fn evaluation_set(&self) -> Vec<ScoreSpec> {
        if self.evaluation_scores.is_empty() {
            self.scores_to_calibrate.clone()
        } else {
            self.evaluation_scores.clone()
        }
    }
}

/// One out-of-sample forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRecord {
    pub date_index: usize,
    pub realized: f64,
    pub mean: f64,
    pub sd: f64,
    /// VaR per configured level, in level order.
    pub var: Vec<f64>,
    /// ES per configured level, in level order.
    pub es: Vec<f64>,
    /// Realised score per evaluation score, in configuration order.
    pub scores: Vec<f64>,
    /// Calibration failed at (or before) this date; previous parameters carried forward.
    pub calibration_failed: bool,
}

/// Forecasts from the predictive calibrated to one score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRun {
    pub score: ScoreSpec,
    pub records: Vec<BacktestRecord>,
    /// Parameters in force at the last forecast.
    pub final_params: ModelParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestOutput {
    pub var_levels: Vec<f64>,
    pub evaluation_scores: Vec<ScoreSpec>,
    pub runs: Vec<ScoreRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSeries {
    pub level: f64,
    pub hits: Vec<u8>,
}

impl ExceedanceSeries {
    pub fn rate(&self) -> f64 {
        self.hits.iter().map(|&h| h as f64).sum::<f64>() / self.hits.len() as f64
    }
}

impl BacktestOutput {
    pub fn run(&self, score: &ScoreSpec) -> Result<&ScoreRun> {
        self.runs
            .iter()
            .find(|r| &r.score == score)
            .ok_or_else(|| Error::InvalidInput(format!("no backtest run for score {score}")))
    }

    pub fn level_index(&self, level: f64) -> Result<usize> {
        level_index(&self.var_levels, level)
    }

    pub fn exceedances(&self, score: &ScoreSpec, level: f64) -> Result<ExceedanceSeries> {
        exceedances(&self.run(score)?.records, self.level_index(level)?, level)
    }

    /// Realised values of one evaluation score for the predictive calibrated to `calibrated`.
    pub fn score_series(&self, calibrated: &ScoreSpec, evaluated: &ScoreSpec) -> Result<Vec<f64>> {
        let k = self
            .evaluation_scores
            .iter()
            .position(|s| s == evaluated)
            .ok_or_else(|| {
                Error::InvalidInput(format!("{evaluated} is not an evaluation score"))
            })?;
        Ok(self
            .run(calibrated)?
            .records
            .iter()
            .map(|r| r.scores[k])
            .collect())
    }
}

pub fn level_index(levels: &[f64], level: f64) -> Result<usize> {
    levels
        .iter()
        .position(|l| (l - level).abs() < 1e-12)
        .ok_or_else(|| Error::InvalidInput(format!("VaR level {level} not in the backtest")))
}

/// `hit_t = 1` iff `realized_t <= VaR_t` at the level stored at `level_idx`.
pub fn exceedances(
    records: &[BacktestRecord],
    level_idx: usize,
    level: f64,
) -> Result<ExceedanceSeries> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records".into()));
    }
    let hits = records
        .iter()
        .map(|r| {
            r.var
                .get(level_idx)
                .map(|v| u8::from(r.realized <= *v))
                .ok_or_else(|| {
                    Error::InvalidInput(format!("record lacks VaR level index {level_idx}"))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExceedanceSeries { level, hits })
}

fn resolve_all(scores: &[ScoreSpec], window: &[f64]) -> Result<Vec<ScoreRule>> {
    scores.iter().map(|s| s.resolve(window)).collect()
}

fn calibrate_window(
    model: ModelKind,
    score: ScoreSpec,
    window: &[f64],
    start: ModelParams,
) -> Result<CalibrationResult> {
    calibrate(&CalibrationProblem {
        model,
        score,
        data: window.to_vec(),
        initial_params: Some(start),
    })
}

pub fn run_backtest(config: &BacktestConfig, series: &[f64]) -> Result<BacktestOutput> {
    config.validate()?;
    let n = series.len();
    if n < config.initial_window + config.holdout {
        return Err(Error::InsufficientHistory {
            needed: config.initial_window + config.holdout,
            got: n,
        });
    }
    if let Some(index) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let first_target = n - config.holdout;
    let first_window = &series[..first_target];

    // Tail-focused calibrations start from the log-score solution on the first window.
    let default = default_start(config.model, first_window)?;
    let ls_first = calibrate_window(config.model, ScoreSpec::Ls, first_window, default).ok();
    let eval_scores = config.evaluation_set();

    let runs = config
        .scores_to_calibrate
        .par_iter()
        .map(|&score| {
            run_single(
                config,
                series,
                score,
                &eval_scores,
                default,
                ls_first.as_ref(),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BacktestOutput {
        var_levels: config.var_levels.clone(),
        evaluation_scores: eval_scores,
        runs,
    })
}

fn run_single(
    config: &BacktestConfig,
    series: &[f64],
    score: ScoreSpec,
    eval_scores: &[ScoreSpec],
    default: ModelParams,
    ls_first: Option<&CalibrationResult>,
) -> Result<ScoreRun> {
    let n = series.len();
    let first_target = n - config.holdout;
    let mut params: Option<ModelParams> = None;
    let mut failed = false;
    let mut eval_rules: Vec<ScoreRule> = Vec::new();
    let mut records = Vec::with_capacity(config.holdout);

    for (step, t) in (first_target..n).enumerate() {
        let window = &series[..t];
        if step % config.reestimation_stride == 0 {
            let fitted = match (step, score, ls_first) {
                (0, ScoreSpec::Ls, Some(ls)) => Ok(ls.clone()),
                _ => {
                    let start = params.or(ls_first.map(|r| r.params)).unwrap_or(default);
                    calibrate_window(config.model, score, window, start)
                }
            };
            match fitted {
                Ok(res) => {
                    params = Some(res.params);
                    failed = false;
                }
                Err(_) => {
                    failed = true;
                    if params.is_none() {
                        params = Some(ls_first.map(|r| r.params).unwrap_or(default));
                    }
                }
            }
            eval_rules = resolve_all(eval_scores, window)?;
        }
        let current = params.expect("parameters set at the first step");
        let pred = current.predictive_series(window)?.next();
        let y = series[t];
        let lag = series[t - 1];
        let mut var = Vec::with_capacity(config.var_levels.len());
        let mut es = Vec::with_capacity(config.var_levels.len());
        for &p in &config.var_levels {
            var.push(gaussian_var(&pred, p)?);
            es.push(gaussian_es(&pred, p)?);
        }
        let scores = eval_rules
            .iter()
            .map(|r| r.score(&pred, y, Some(lag)))
            .collect::<Result<Vec<_>>>()?;
        records.push(BacktestRecord {
            date_index: t,
            realized: y,
            mean: pred.mean(),
            sd: pred.sd(),
            var,
            es,
            scores,
            calibration_failed: failed,
        });
    }
    Ok(ScoreRun {
        score,
        records,
        final_params: params.expect("at least one forecast"),
    })
}
