//! Volatility filters and the Gaussian one-step-ahead predictive.
//!
//! Both filters map a parameter vector and an observed series to the
//! sequence of Gaussian predictives a forecaster would have issued, one per
//! date, ending with the out-of-sample one-step-ahead predictive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Short and long HAR averaging windows.
pub const HAR_WEEK: usize = 5;
pub const HAR_MONTH: usize = 22;
/// Minimum log-VIX history for the HAR-GARCH filter.
pub const HAR_MIN_HISTORY: usize = HAR_MONTH + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub mu: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta1: f64,
}

impl GarchParams {
    pub fn new(mu: f64, alpha0: f64, alpha1: f64, beta1: f64) -> Result<Self> {
        let p = Self {
            mu,
            alpha0,
            alpha1,
            beta1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu.is_finite()
            && self.alpha0.is_finite()
            && self.alpha0 > 0.0
            && self.alpha1 >= 0.0
            && self.beta1 >= 0.0
            && self.alpha1 + self.beta1 < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{self:?}")))
        }
    }

    pub fn persistence(&self) -> f64 {
        self.alpha1 + self.beta1
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.alpha0 / (1.0 - self.persistence())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarGarchParams {
    /// Intercept, daily, weekly and monthly coefficients.
    pub beta: [f64; 4],
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl HarGarchParams {
    pub fn new(beta: [f64; 4], alpha0: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        let p = Self {
            beta,
            alpha0,
            alpha1,
            alpha2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.beta.iter().all(|b| b.is_finite())
            && self.alpha0.is_finite()
            && self.alpha0 > 0.0
            && self.alpha1 >= 0.0
            && self.alpha2 >= 0.0
            && self.alpha1 + self.alpha2 < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{self:?}")))
        }
    }

    pub fn persistence(&self) -> f64 {
        self.alpha1 + self.alpha2
    }
}

/// A normal one-step-ahead predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPredictive {
    mean: f64,
    sd: f64,
}

impl GaussianPredictive {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !sd.is_finite() || sd <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "predictive needs finite mean and sd > 0, got ({mean}, {sd})"
            )));
        }
        Ok(Self { mean, sd })
    }

    pub fn from_variance(mean: f64, variance: f64) -> Result<Self> {
        Self::new(mean, variance.sqrt())
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.mean) / self.sd
    }

    pub fn ln_pdf(&self, y: f64) -> f64 {
        normal::ln_pdf(self.standardize(y)) - self.sd.ln()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        normal::cdf(self.standardize(y))
    }

    pub fn sf(&self, y: f64) -> f64 {
        normal::sf(self.standardize(y))
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(p))
    }
}

/// The p-quantile of the predictive (the VaR at level p, lower-tail convention).
pub fn gaussian_var(pred: &GaussianPredictive, p: f64) -> Result<f64> {
    check_probability(p)?;
    Ok(pred.mean + pred.sd * normal::quantile(p))
}

/// Expected shortfall `(1/p) * integral_0^p VaR_a da`, in closed form.
pub fn gaussian_es(pred: &GaussianPredictive, p: f64) -> Result<f64> {
    check_probability(p)?;
    let z = normal::quantile(p);
    Ok(pred.mean - pred.sd * normal::pdf(z) / p)
}

/// `Pr(Y > threshold)` under the predictive.
pub fn prob_exceed(pred: &GaussianPredictive, threshold: f64) -> Result<f64> {
    if threshold.is_nan() {
        return Err(Error::InvalidInput("threshold is NaN".into()));
    }
    Ok(pred.sf(threshold))
}

fn check_finite(series: &[f64]) -> Result<()> {
    match series.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Population variance (divisor n). Zero for a single observation.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// GARCH(1,1) conditional variances initialised at the sample variance of
/// `series` (falling back to the unconditional variance for a constant series).
pub fn garch_filter(params: &GarchParams, series: &[f64]) -> Result<Vec<f64>> {
    let mut init = sample_variance(series);
    if !(init > 0.0) {
        init = params.unconditional_variance();
    }
    garch_filter_with_init(params, series, init)
}

/// Returns `series.len() + 1` variances: element 0 is `init`, element `t + 1`
/// is `alpha0 + alpha1 (y_t - mu)^2 + beta1 * sigma2_t`. The last element is
/// the one-step-ahead forecast variance.
pub fn garch_filter_with_init(params: &GarchParams, series: &[f64], init: f64) -> Result<Vec<f64>> {
    params.validate()?;
    if series.is_empty() {
        return Err(Error::InsufficientHistory { needed: 1, got: 0 });
    }
    check_finite(series)?;
    if !(init > 0.0) || !init.is_finite() {
        return Err(Error::InvalidInput(format!("initial variance {init}")));
    }
    let mut out = Vec::with_capacity(series.len() + 1);
    let mut s2 = init;
    out.push(s2);
    for &y in series {
        let e = y - params.mu;
        s2 = params.alpha0 + params.alpha1 * e * e + params.beta1 * s2;
        out.push(s2);
    }
    Ok(out)
}

/// Conditional mean and variance of the HAR-GARCH model for each date it can
/// forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanVariance {
    pub mean: f64,
    pub variance: f64,
}

/// Element `k` is the forecast for `log_vix[HAR_MONTH + k]`; the final element
/// forecasts the first date after the series. Output length is
/// `log_vix.len() - HAR_MONTH + 1`.
///
/// Moving averages cover the m most recent values including the forecast
/// origin. The first variance is `alpha0 + (alpha1 + alpha2) * v0` with `v0`
/// the sample variance of the daily changes, i.e. the recursion with the
/// squared residual replaced by its expectation.
pub fn har_garch_filter(params: &HarGarchParams, log_vix: &[f64]) -> Result<Vec<MeanVariance>> {
    params.validate()?;
    if log_vix.len() < HAR_MIN_HISTORY {
        return Err(Error::InsufficientHistory {
            needed: HAR_MIN_HISTORY,
            got: log_vix.len(),
        });
    }
    check_finite(log_vix)?;
    let diffs: Vec<f64> = log_vix.windows(2).map(|w| w[1] - w[0]).collect();
    let mut v0 = sample_variance(&diffs);
    if !(v0 > 0.0) {
        v0 = params.alpha0 / (1.0 - params.persistence());
    }

    let n = log_vix.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &x in log_vix {
        acc += x;
        prefix.push(acc);
    }
    let window_mean =
        |origin: usize, m: usize| (prefix[origin + 1] - prefix[origin + 1 - m]) / m as f64;

    let [b0, b1, b2, b3] = params.beta;
    let mut out = Vec::with_capacity(n - HAR_MONTH + 1);
    let mut variance = params.alpha0 + params.persistence() * v0;
    for origin in (HAR_MONTH - 1)..n {
        let mean = b0
            + b1 * log_vix[origin]
            + b2 * window_mean(origin, HAR_WEEK)
            + b3 * window_mean(origin, HAR_MONTH);
        out.push(MeanVariance { mean, variance });
        if origin + 1 < n {
            let resid = log_vix[origin + 1] - mean;
            variance = params.alpha0 + params.alpha1 * resid * resid + params.alpha2 * variance;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Garch,
    HarGarch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    Garch(GarchParams),
    HarGarch(HarGarchParams),
}

/// Predictives issued over a series: `preds[k]` targets `data[first_target + k]`
/// and the last element targets the first date past the end.
#[derive(Debug, Clone)]
pub struct PredictiveSeries {
    pub first_target: usize,
    pub preds: Vec<GaussianPredictive>,
}

impl PredictiveSeries {
    /// The out-of-sample one-step-ahead predictive.
    pub fn next(&self) -> GaussianPredictive {
        *self.preds.last().expect("non-empty predictive series")
    }

    /// Predictive for `data[t]`, if the model forecasts that date.
    pub fn at(&self, t: usize) -> Option<&GaussianPredictive> {
        t.checked_sub(self.first_target)
            .and_then(|k| self.preds.get(k))
    }
}

impl ModelKind {
    pub fn min_history(self) -> usize {
        match self {
            ModelKind::Garch => 1,
            ModelKind::HarGarch => HAR_MIN_HISTORY,
        }
    }

    /// First index entering the sample criterion. GARCH skips the first
    /// observation, whose predictive is only the initialisation.
    pub fn first_scored(self) -> usize {
        match self {
            ModelKind::Garch => 1,
            ModelKind::HarGarch => HAR_MONTH,
        }
    }
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Garch(_) => ModelKind::Garch,
            ModelParams::HarGarch(_) => ModelKind::HarGarch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelParams::Garch(p) => p.validate(),
            ModelParams::HarGarch(p) => p.validate(),
        }
    }

    pub fn predictive_series(&self, data: &[f64]) -> Result<PredictiveSeries> {
        match self {
            ModelParams::Garch(p) => {
                let vars = garch_filter(p, data)?;
                let preds = vars
                    .into_iter()
                    .map(|v| GaussianPredictive::from_variance(p.mu, v))
                    .collect::<Result<Vec<_>>>()?;
                Ok(PredictiveSeries {
                    first_target: 0,
                    preds,
                })
            }
            ModelParams::HarGarch(p) => {
                let mv = har_garch_filter(p, data)?;
                let preds = mv
                    .into_iter()
                    .map(|m| GaussianPredictive::from_variance(m.mean, m.variance))
                    .collect::<Result<Vec<_>>>()?;
                Ok(PredictiveSeries {
                    first_target: HAR_MONTH,
                    preds,
                })
            }
        }
    }
}
