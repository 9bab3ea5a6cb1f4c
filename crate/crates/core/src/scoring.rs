//! Positively oriented scoring rules: log score, censored log score, quantile
//! score and the elementary joint VaR/ES score family.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{gaussian_var, GaussianPredictive};

/// Region of interest for the censored log score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// `A = (-inf, q]` with `q` the empirical `level` quantile of the window.
    LowerTail { level: f64 },
    /// `A = [q, +inf)` with `q` the empirical `level` quantile of the window.
    UpperTail { level: f64 },
    /// `A = [y_{t-1}, +inf)`: the value rises relative to the previous date.
    AboveLag,
}

/// A region with its boundary fixed to a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolved {
    /// `A = (-inf, b]`
    Below(f64),
    /// `A = [b, +inf)`
    Above(f64),
}

/// Serialised as its label, e.g. `"CLS10"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScoreSpec {
    Ls,
    Cls { region: Region },
    Qs { level: f64 },
}

impl ScoreSpec {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |p: f64| p > 0.0 && p < 1.0;
        let ok = match self {
            ScoreSpec::Ls => true,
            ScoreSpec::Cls { region } => match region {
                Region::LowerTail { level } | Region::UpperTail { level } => in_unit(*level),
                Region::AboveLag => true,
            },
            ScoreSpec::Qs { level } => in_unit(*level),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid score specification {self:?}"
            )))
        }
    }

    /// Fix tail boundaries from an in-window sample.
    pub fn resolve(&self, window: &[f64]) -> Result<ScoreRule> {
        self.validate()?;
        Ok(match *self {
            ScoreSpec::Ls => ScoreRule::Ls,
            ScoreSpec::Qs { level } => ScoreRule::qs(level),
            ScoreSpec::Cls { region } => match region {
                Region::LowerTail { level } => ScoreRule::Cls(RuleRegion::Fixed(Resolved::Below(
                    empirical_quantile(window, level)?,
                ))),
                Region::UpperTail { level } => ScoreRule::Cls(RuleRegion::Fixed(Resolved::Above(
                    empirical_quantile(window, level)?,
                ))),
                Region::AboveLag => ScoreRule::Cls(RuleRegion::AboveLag),
            },
        })
    }

    pub fn needs_lag(&self) -> bool {
        matches!(
            self,
            ScoreSpec::Cls {
                region: Region::AboveLag
            }
        )
    }
}

fn fmt_pct(p: f64) -> String {
    let pct = p * 100.0;
    let s = format!("{pct:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl fmt::Display for ScoreSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreSpec::Ls => write!(f, "LS"),
            ScoreSpec::Qs { level } => write!(f, "QS{}", fmt_pct(*level)),
            ScoreSpec::Cls { region } => match region {
                Region::LowerTail { level } | Region::UpperTail { level } => {
                    write!(f, "CLS{}", fmt_pct(*level))
                }
                Region::AboveLag => write!(f, "CLSLAG"),
            },
        }
    }
}

/// Parses the labels used throughout reports: `LS`, `CLS10`, `CLS90`,
/// `QS2.5`, `CLSLAG`. A CLS level below 50 selects the lower tail, above 50
/// the upper tail.
impl FromStr for ScoreSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let bad = || Error::InvalidInput(format!("unknown score label {s:?}"));
        let pct = |rest: &str| -> Result<f64> {
            let v: f64 = rest.parse().map_err(|_| bad())?;
            if v > 0.0 && v < 100.0 {
                Ok(v / 100.0)
            } else {
                Err(bad())
            }
        };
        let spec = if upper == "LS" || upper == "MLE" {
            ScoreSpec::Ls
        } else if upper == "CLSLAG" {
            ScoreSpec::Cls {
                region: Region::AboveLag,
            }
        } else if let Some(rest) = upper.strip_prefix("CLS") {
            let level = pct(rest)?;
            let region = if level < 0.5 {
                Region::LowerTail { level }
            } else if level > 0.5 {
                Region::UpperTail { level }
            } else {
                return Err(bad());
            };
            ScoreSpec::Cls { region }
        } else if let Some(rest) = upper.strip_prefix("QS") {
            ScoreSpec::Qs { level: pct(rest)? }
        } else {
            return Err(bad());
        };
        Ok(spec)
    }
}

impl From<ScoreSpec> for String {
    fn from(s: ScoreSpec) -> Self {
        s.to_string()
    }
}

impl TryFrom<String> for ScoreSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleRegion {
    Fixed(Resolved),
    AboveLag,
}

/// A score ready for evaluation: every tail boundary is a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreRule {
    Ls,
    Cls(RuleRegion),
    /// `z` caches the standard normal `level` quantile.
    Qs {
        level: f64,
        z: f64,
    },
}

impl ScoreRule {
    pub fn qs(level: f64) -> Self {
        ScoreRule::Qs {
            level,
            z: crate::normal::quantile(level),
        }
    }

    /// Score of `pred` at realisation `y`. `lag` is the previous observation,
    /// only consulted by the above-lag region.
    pub fn score(&self, pred: &GaussianPredictive, y: f64, lag: Option<f64>) -> Result<f64> {
        match self {
            ScoreRule::Ls => Ok(log_score(pred, y)),
            ScoreRule::Qs { level, z } => Ok(quantile_loss(pred.mean() + pred.sd() * z, y, *level)),
            ScoreRule::Cls(RuleRegion::Fixed(region)) => Ok(censored_log_score(pred, y, *region)),
            ScoreRule::Cls(RuleRegion::AboveLag) => {
                let b = lag.ok_or_else(|| {
                    Error::InvalidInput("above-lag region needs the previous observation".into())
                })?;
                Ok(censored_log_score(pred, y, Resolved::Above(b)))
            }
        }
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `(n - 1) * p` on the sorted sample).
pub fn empirical_quantile(xs: &[f64], p: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InsufficientHistory { needed: 1, got: 0 });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(p));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn log_score(pred: &GaussianPredictive, y: f64) -> f64 {
    pred.ln_pdf(y)
}

/// Censored log score. Inside the closed region `A` it is the log density;
/// outside it is the log predictive mass of the complement. A complement of
/// zero mass yields `-inf`.
pub fn censored_log_score(pred: &GaussianPredictive, y: f64, region: Resolved) -> f64 {
    match region {
        Resolved::Below(b) => {
            if y <= b {
                pred.ln_pdf(y)
            } else {
                pred.sf(b).ln()
            }
        }
        Resolved::Above(b) => {
            if y >= b {
                pred.ln_pdf(y)
            } else {
                pred.cdf(b).ln()
            }
        }
    }
}

/// `[1(y <= VaR_p) - p] (y - VaR_p)`; non-positive, zero only at `y = VaR_p`.
pub fn quantile_score(pred: &GaussianPredictive, y: f64, p: f64) -> Result<f64> {
    let var = gaussian_var(pred, p)?;
    Ok(quantile_loss(var, y, p))
}

/// Quantile score of a given VaR: `[1(y <= var) - p] (y - var)`.
pub fn quantile_loss(var: f64, y: f64, p: f64) -> f64 {
    let hit = if y <= var { 1.0 } else { 0.0 };
    (hit - p) * (y - var)
}

/// A joint (VaR, ES) forecast at a common level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarEsPair {
    pub var: f64,
    pub es: f64,
}

impl VarEsPair {
    pub fn new(var: f64, es: f64) -> Result<Self> {
        if !(var.is_finite() && es.is_finite()) || es > var {
            return Err(Error::InvalidInput(format!(
                "need finite es <= var, got ({var}, {es})"
            )));
        }
        Ok(Self { var, es })
    }

    pub fn from_predictive(pred: &GaussianPredictive, p: f64) -> Result<Self> {
        Self::new(gaussian_var(pred, p)?, crate::models::gaussian_es(pred, p)?)
    }
}

/// Elementary joint VaR/ES score at threshold `eta`, positively oriented:
///
/// `-1(eta <= ES) [ (1/p) 1(y <= VaR)(VaR - y) - (VaR - eta) ] - 1(eta <= y)(y - eta)`
pub fn fz_joint_score(pair: &VarEsPair, y: f64, p: f64, eta: f64) -> f64 {
    let mut s = 0.0;
    if eta <= pair.es {
        let tail = if y <= pair.var {
            (pair.var - y) / p
        } else {
            0.0
        };
        s -= tail - (pair.var - eta);
    }
    if eta <= y {
        s -= y - eta;
    }
    s
}

/// Mean score over aligned predictives and realisations. `lagged[t]` is the
/// observation preceding `realized[t]`; it is required only by the above-lag
/// region.
pub fn average_score(
    rule: &ScoreRule,
    predictives: &[GaussianPredictive],
    realized: &[f64],
    lagged: Option<&[f64]>,
) -> Result<f64> {
    if predictives.len() != realized.len() {
        return Err(Error::LengthMismatch {
            left: predictives.len(),
            right: realized.len(),
        });
    }
    if let Some(l) = lagged {
        if l.len() != realized.len() {
            return Err(Error::LengthMismatch {
                left: l.len(),
                right: realized.len(),
            });
        }
    }
    if realized.is_empty() {
        return Err(Error::InsufficientHistory { needed: 1, got: 0 });
    }
    let mut sum = 0.0;
    for (t, (pred, &y)) in predictives.iter().zip(realized).enumerate() {
        sum += rule.score(pred, y, lagged.map(|l| l[t]))?;
    }
    Ok(sum / realized.len() as f64)
}
