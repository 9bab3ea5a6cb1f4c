//! Score-optimal parameter estimation.
//!
//! The sample criterion is the average score of the model's one-step-ahead
//! predictives over the estimation window (the first observation only
//! initialises the filter). It is maximised with Nelder–Mead in an
//! unconstrained reparameterisation:
//!
//! * location/regression coefficients: identity
//! * `alpha0`: log
//! * persistence `a + b`: logit, so `a + b < 1` always holds
//! * split `a / (a + b)`: logit

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    sample_variance, GarchParams, HarGarchParams, ModelKind, ModelParams, HAR_MONTH, HAR_WEEK,
};
use crate::optim::{maximize, NelderMeadOptions};
use crate::scoring::{ScoreRule, ScoreSpec};

/// Smallest estimation window accepted.
pub const MIN_WINDOW: usize = 30;

const LOG_BOUND: (f64, f64) = (-40.0, 20.0);
const LOGIT_BOUND: (f64, f64) = (-30.0, 30.0);
const FREE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn split_persistence(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let frac = if s > 0.0 { a / s } else { 0.5 };
    (logit(s), logit(frac))
}

fn join_persistence(u_s: f64, u_f: f64) -> (f64, f64) {
    let s = logistic(u_s);
    let frac = logistic(u_f);
    (s * frac, s * (1.0 - frac))
}

/// Map valid parameters to the unconstrained search space.
pub fn transform_params(params: &ModelParams) -> Result<Vec<f64>> {
    params.validate()?;
    Ok(match params {
        ModelParams::Garch(p) => {
            let (us, uf) = split_persistence(p.alpha1, p.beta1);
            vec![p.mu, p.alpha0.ln(), us, uf]
        }
        ModelParams::HarGarch(p) => {
            let (us, uf) = split_persistence(p.alpha1, p.alpha2);
            vec![
                p.beta[0],
                p.beta[1],
                p.beta[2],
                p.beta[3],
                p.alpha0.ln(),
                us,
                uf,
            ]
        }
    })
}

/// Inverse of [`transform_params`].
pub fn untransform_params(kind: ModelKind, u: &[f64]) -> Result<ModelParams> {
    let want = match kind {
        ModelKind::Garch => 4,
        ModelKind::HarGarch => 7,
    };
    if u.len() != want {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: want,
        });
    }
    Ok(match kind {
        ModelKind::Garch => {
            let (a1, b1) = join_persistence(u[2], u[3]);
            ModelParams::Garch(GarchParams {
                mu: u[0],
                alpha0: u[1].exp(),
                alpha1: a1,
                beta1: b1,
            })
        }
        ModelKind::HarGarch => {
            let (a1, a2) = join_persistence(u[5], u[6]);
            ModelParams::HarGarch(HarGarchParams {
                beta: [u[0], u[1], u[2], u[3]],
                alpha0: u[4].exp(),
                alpha1: a1,
                alpha2: a2,
            })
        }
    })
}

fn search_bounds(kind: ModelKind) -> Vec<(f64, f64)> {
    match kind {
        ModelKind::Garch => vec![FREE, LOG_BOUND, LOGIT_BOUND, LOGIT_BOUND],
        ModelKind::HarGarch => vec![FREE, FREE, FREE, FREE, LOG_BOUND, LOGIT_BOUND, LOGIT_BOUND],
    }
}

/// Average score of the model's predictives over `data`, using an already
/// resolved rule.
pub fn criterion(params: &ModelParams, data: &[f64], rule: &ScoreRule) -> Result<f64> {
    let kind = params.kind();
    let first = kind.first_scored();
    if data.len() <= first {
        return Err(Error::InsufficientHistory {
            needed: first + 1,
            got: data.len(),
        });
    }
    let series = params.predictive_series(data)?;
    let mut sum = 0.0;
    for t in first..data.len() {
        let pred = series.at(t).expect("filter covers every scored date");
        sum += rule.score(pred, data[t], Some(data[t - 1]))?;
    }
    Ok(sum / (data.len() - first) as f64)
}

/// Variance-targeted GARCH start: sample mean, `alpha1 = 0.05`, `beta1 = 0.90`.
pub fn default_garch_start(data: &[f64]) -> GarchParams {
    let n = data.len().max(1) as f64;
    let mu = data.iter().sum::<f64>() / n;
    let var = sample_variance(data).max(1e-12);
    GarchParams {
        mu,
        alpha0: var * 0.05,
        alpha1: 0.05,
        beta1: 0.90,
    }
}

/// HAR start: least-squares regression coefficients, then a variance-targeted
/// GARCH part on the regression residuals.
pub fn default_har_start(data: &[f64]) -> Result<HarGarchParams> {
    if data.len() < HAR_MONTH + 2 {
        return Err(Error::InsufficientHistory {
            needed: HAR_MONTH + 2,
            got: data.len(),
        });
    }
    let mut xtx = [[0.0; 4]; 4];
    let mut xty = [0.0; 4];
    let mut rows = Vec::new();
    for origin in (HAR_MONTH - 1)..(data.len() - 1) {
        let week = data[origin + 1 - HAR_WEEK..=origin].iter().sum::<f64>() / HAR_WEEK as f64;
        let month = data[origin + 1 - HAR_MONTH..=origin].iter().sum::<f64>() / HAR_MONTH as f64;
        let x = [1.0, data[origin], week, month];
        let y = data[origin + 1];
        for i in 0..4 {
            xty[i] += x[i] * y;
            for j in 0..4 {
                xtx[i][j] += x[i] * x[j];
            }
        }
        rows.push((x, y));
    }
    // Ridge term keeps the solve well posed when the regressors are collinear
    // (e.g. a constant series).
    for (i, row) in xtx.iter_mut().enumerate() {
        row[i] += 1e-8 * (1.0 + row[i]);
    }
    let beta = solve4(xtx, xty).unwrap_or([0.0, 1.0, 0.0, 0.0]);
    let resid: Vec<f64> = rows
        .iter()
        .map(|(x, y)| y - x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let var = sample_variance(&resid).max(1e-12);
    Ok(HarGarchParams {
        beta,
        alpha0: var * 0.05,
        alpha1: 0.05,
        alpha2: 0.90,
    })
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let factor = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= factor * p;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn default_start(kind: ModelKind, data: &[f64]) -> Result<ModelParams> {
    Ok(match kind {
        ModelKind::Garch => ModelParams::Garch(default_garch_start(data)),
        ModelKind::HarGarch => ModelParams::HarGarch(default_har_start(data)?),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationProblem {
    pub model: ModelKind,
    pub score: ScoreSpec,
    pub data: Vec<f64>,
    /// Starting point; the variance-targeted default when absent.
    pub initial_params: Option<ModelParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: ModelParams,
    pub criterion_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// A constrained coordinate ended at its search bound (e.g. `alpha0`
    /// driven towards zero).
    pub at_boundary: bool,
}

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub restarts: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 2000,
            initial_step: 0.1,
            restarts: 1,
        }
    }
}

pub fn calibrate(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    calibrate_with(problem, &CalibrationOptions::default())
}

pub fn calibrate_with(
    problem: &CalibrationProblem,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let data = &problem.data;
    let needed = MIN_WINDOW.max(problem.model.min_history());
    if data.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            got: data.len(),
        });
    }
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let start = match problem.initial_params {
        Some(p) => {
            if p.kind() != problem.model {
                return Err(Error::InvalidParams(
                    "initial parameters do not match the model".into(),
                ));
            }
            p
        }
        None => default_start(problem.model, data)?,
    };
    let rule = problem.score.resolve(data)?;
    let kind = problem.model;

    let objective = |u: &[f64]| -> f64 {
        match untransform_params(kind, u) {
            Ok(p) if p.validate().is_ok() => {
                criterion(&p, data, &rule).unwrap_or(f64::NEG_INFINITY)
            }
            _ => f64::NEG_INFINITY,
        }
    };

    let bounds = search_bounds(kind);
    let mut u0 = transform_params(&start)?;
    for (x, &(lo, hi)) in u0.iter_mut().zip(&bounds) {
        *x = x.clamp(lo, hi);
    }
    let start_value = objective(&u0);
    let nm = NelderMeadOptions {
        tolerance: opts.tolerance,
        max_iterations: opts.max_iterations,
        initial_step: opts.initial_step,
        restarts: opts.restarts,
        bounds: Some(bounds.clone()),
    };
    let found = maximize(objective, &u0, &nm);
    if found.value == f64::NEG_INFINITY {
        return Err(Error::Degenerate(format!(
            "{} criterion is -inf everywhere the search visited",
            problem.score
        )));
    }
    // Never return something worse than the start.
    let (u_best, value) = if found.value >= start_value {
        (found.x, found.value)
    } else {
        (u0, start_value)
    };
    let at_boundary = u_best
        .iter()
        .zip(&bounds)
        .any(|(x, &(lo, hi))| (x - lo).abs() < 1e-3 || (hi - x).abs() < 1e-3);
    let params = untransform_params(kind, &u_best)?;
    Ok(CalibrationResult {
        params,
        criterion_value: value,
        iterations: found.iterations,
        converged: found.converged,
        at_boundary,
    })
}
