//! Forecast evaluation: conditional coverage of VaR exceedances, unconditional
//! equal-predictive-ability tests on score differences, and Murphy diagrams
//! for joint VaR/ES forecasts with moving-block bootstrap bands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backtest::ExceedanceSeries;
use crate::error::{Error, Result};
use crate::normal;
use crate::scoring::{empirical_quantile, fz_joint_score, VarEsPair};

/// Survival function of the chi-squared distribution with 1 degree of freedom.
pub fn chi2_sf_1(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        libm::erfc((x / 2.0).sqrt())
    }
}

/// Survival function of the chi-squared distribution with 2 degrees of freedom.
pub fn chi2_sf_2(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        (-x / 2.0).exp()
    }
}

// n * ln(p) with the convention 0 * ln(0) = 0.
fn xlogy(n: f64, p: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        n * p.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageTestResult {
    pub lr_uc: f64,
    pub lr_ind: f64,
    pub lr_cc: f64,
    pub p_uc: f64,
    pub p_ind: f64,
    pub p_cc: f64,
    pub empirical_rate: f64,
    /// No hits, only hits, or no transition out of a hit: the independence
    /// likelihood is evaluated with `0 ln 0 = 0`.
    pub degenerate: bool,
}

impl CoverageTestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_cc < alpha
    }
}

/// Christoffersen's unconditional coverage, independence (first-order Markov
/// alternative) and conditional coverage likelihood-ratio tests.
pub fn christoffersen_cc(hits: &ExceedanceSeries, nominal: f64) -> Result<CoverageTestResult> {
    if !(nominal > 0.0 && nominal < 1.0) {
        return Err(Error::Domain(nominal));
    }
    let h = &hits.hits;
    if h.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            got: h.len(),
        });
    }
    if h.iter().any(|&v| v > 1) {
        return Err(Error::InvalidInput("hit series must be 0/1".into()));
    }
    let n = h.len() as f64;
    let n1 = h.iter().filter(|&&v| v == 1).count() as f64;
    let n0 = n - n1;
    let rate = n1 / n;
    let ll_null = xlogy(n0, 1.0 - nominal) + xlogy(n1, nominal);
    let ll_alt = xlogy(n0, 1.0 - rate) + xlogy(n1, rate);
    let lr_uc = (-2.0 * (ll_null - ll_alt)).max(0.0);

    let mut counts = [[0.0f64; 2]; 2];
    for w in h.windows(2) {
        counts[w[0] as usize][w[1] as usize] += 1.0;
    }
    let [[n00, n01], [n10, n11]] = counts;
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let pi01 = ratio(n01, n00 + n01);
    let pi11 = ratio(n11, n10 + n11);
    let pi = ratio(n01 + n11, n00 + n01 + n10 + n11);
    let ll_markov =
        xlogy(n00, 1.0 - pi01) + xlogy(n01, pi01) + xlogy(n10, 1.0 - pi11) + xlogy(n11, pi11);
    let ll_iid = xlogy(n00 + n10, 1.0 - pi) + xlogy(n01 + n11, pi);
    let lr_ind = (-2.0 * (ll_iid - ll_markov)).max(0.0);
    let lr_cc = lr_uc + lr_ind;

    Ok(CoverageTestResult {
        lr_uc,
        lr_ind,
        lr_cc,
        p_uc: chi2_sf_1(lr_uc),
        p_ind: chi2_sf_1(lr_ind),
        p_cc: chi2_sf_2(lr_cc),
        empirical_rate: rate,
        degenerate: n1 == 0.0 || n0 == 0.0 || n10 + n11 == 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpaTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub mean_diff: f64,
    pub lags: usize,
    /// The score differences have zero variance.
    pub degenerate: bool,
}

/// Default Bartlett truncation lag `floor(4 (n/100)^(2/9))`.
pub fn newey_west_lags(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Bartlett-kernel long-run variance of `d`.
pub fn hac_variance(d: &[f64], lags: usize) -> f64 {
    let n = d.len();
    let mean = d.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = d.iter().map(|x| x - mean).collect();
    let gamma = |l: usize| {
        centered[l..]
            .iter()
            .zip(&centered)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let mut v = gamma(0);
    for l in 1..=lags.min(n - 1) {
        v += 2.0 * (1.0 - l as f64 / (lags as f64 + 1.0)) * gamma(l);
    }
    v
}

/// Unconditional Giacomini–White test of equal predictive ability on
/// `d_t = score_a_t - score_b_t`. Positive statistics favour `score_a`.
pub fn gw_test(score_a: &[f64], score_b: &[f64]) -> Result<EpaTestResult> {
    if score_a.len() != score_b.len() {
        return Err(Error::LengthMismatch {
            left: score_a.len(),
            right: score_b.len(),
        });
    }
    let n = score_a.len();
    if n < 30 {
        return Err(Error::InsufficientHistory { needed: 30, got: n });
    }
    let d: Vec<f64> = score_a.iter().zip(score_b).map(|(a, b)| a - b).collect();
    if let Some(index) = d.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let lags = newey_west_lags(n);
    let constant = d.iter().all(|&x| x == d[0]);
    if constant {
        if mean == 0.0 {
            return Ok(EpaTestResult {
                statistic: 0.0,
                p_value: 1.0,
                mean_diff: 0.0,
                lags,
                degenerate: true,
            });
        }
        return Err(Error::Degenerate(
            "score differences are a non-zero constant; the test statistic is undefined".into(),
        ));
    }
    let var = hac_variance(&d, lags);
    let statistic = mean / (var / n as f64).sqrt();
    let p_value = (2.0 * normal::sf(statistic.abs())).min(1.0);
    Ok(EpaTestResult {
        statistic,
        p_value,
        mean_diff: mean,
        lags,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    /// Two-sided coverage of the band, e.g. 0.95.
    pub confidence: f64,
    /// Block length; `ceil(n^(1/3))` when absent.
    pub block_length: Option<usize>,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            confidence: 0.95,
            block_length: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MurphyCurve {
    pub eta_grid: Vec<f64>,
    pub delta: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
}

/// 201 equally spaced thresholds on `[min(y) - sd(y), max(y)]`.
pub fn default_eta_grid(realized: &[f64]) -> Vec<f64> {
    eta_grid(realized, 201)
}

pub fn eta_grid(realized: &[f64], points: usize) -> Vec<f64> {
    if realized.is_empty() || points == 0 {
        return Vec::new();
    }
    let sd = crate::models::sample_variance(realized).sqrt();
    let lo = realized.iter().copied().fold(f64::INFINITY, f64::min) - sd;
    let hi = realized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Average elementary-score difference `mean_t S_eta(a_t) - mean_t S_eta(b_t)`
/// over the grid, with moving-block bootstrap percentile bands that resample
/// dates jointly for both forecast sequences.
pub fn murphy_diagram(
    pairs_a: &[VarEsPair],
    pairs_b: &[VarEsPair],
    realized: &[f64],
    p: f64,
    eta_grid: &[f64],
    bootstrap: &BootstrapConfig,
) -> Result<MurphyCurve> {
    if eta_grid.is_empty() {
        return Err(Error::InvalidInput("empty eta grid".into()));
    }
    if eta_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput(
            "eta grid must be sorted ascending".into(),
        ));
    }
    if pairs_a.len() != realized.len() || pairs_b.len() != realized.len() {
        return Err(Error::LengthMismatch {
            left: pairs_a.len().max(pairs_b.len()),
            right: realized.len(),
        });
    }
    if realized.is_empty() {
        return Err(Error::InsufficientHistory { needed: 1, got: 0 });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(p));
    }
    if !(bootstrap.confidence > 0.0 && bootstrap.confidence < 1.0) {
        return Err(Error::Domain(bootstrap.confidence));
    }
    let n = realized.len();
    let block = bootstrap
        .block_length
        .unwrap_or_else(|| (n as f64).cbrt().ceil() as usize)
        .clamp(1, n);
    let blocks_per_rep = n.div_ceil(block);

    // Block starts are shared by every eta so dates are resampled jointly.
    let mut rng = ChaCha8Rng::seed_from_u64(bootstrap.seed);
    let starts: Vec<usize> = (0..bootstrap.replicates * blocks_per_rep)
        .map(|_| rng.gen_range(0..=n - block))
        .collect();

    let lo_q = (1.0 - bootstrap.confidence) / 2.0;
    let hi_q = 1.0 - lo_q;
    let rows: Vec<(f64, f64, f64)> = eta_grid
        .par_iter()
        .map(|&eta| {
            let mut prefix = Vec::with_capacity(n + 1);
            prefix.push(0.0);
            let mut acc = 0.0;
            for t in 0..n {
                acc += fz_joint_score(&pairs_a[t], realized[t], p, eta)
                    - fz_joint_score(&pairs_b[t], realized[t], p, eta);
                prefix.push(acc);
            }
            let delta = acc / n as f64;
            if bootstrap.replicates == 0 {
                return Ok((delta, delta, delta));
            }
            let reps: Vec<f64> = starts
                .chunks(blocks_per_rep)
                .map(|chunk| {
                    let mut remaining = n;
                    let mut sum = 0.0;
                    for &s in chunk {
                        let len = block.min(remaining);
                        sum += prefix[s + len] - prefix[s];
                        remaining -= len;
                    }
                    sum / n as f64
                })
                .collect();
            let lo = empirical_quantile(&reps, lo_q)?;
            let hi = empirical_quantile(&reps, hi_q)?;
            Ok((delta, lo.min(delta), hi.max(delta)))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MurphyCurve {
        eta_grid: eta_grid.to_vec(),
        delta: rows.iter().map(|r| r.0).collect(),
        ci_lower: rows.iter().map(|r| r.1).collect(),
        ci_upper: rows.iter().map(|r| r.2).collect(),
    })
}
