//! Data generating processes for the simulation study.
//!
//! * Gaussian GARCH(1,1): `sigma2_t = 1 + 0.2 y_{t-1}^2 + 0.7 sigma2_{t-1}`
//! * the same recursion with unit-variance Student-t innovations
//! * a stochastic-volatility process whose draws are pushed through the
//!   stationary marginal CDF of the latent process and then the skew-normal
//!   quantile function, so the marginal of `y_t` is exactly skew-normal.
//!
//! Every recursive simulation discards a burn-in of [`BURN_IN`] draws.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::quadrature::{gauss_hermite, gauss_legendre, integrate, Rule};

pub const BURN_IN: usize = 1000;

pub const GARCH_ALPHA0: f64 = 1.0;
pub const GARCH_ALPHA1: f64 = 0.2;
pub const GARCH_BETA1: f64 = 0.7;

/// Latent log-volatility AR(1) of the SV process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvState {
    pub h: f64,
    pub stationary_mean: f64,
    pub persistence: f64,
    pub vol_of_vol: f64,
}

impl Default for SvState {
    fn default() -> Self {
        Self {
            h: -0.4581,
            stationary_mean: -0.4581,
            persistence: 0.9,
            vol_of_vol: 0.4172,
        }
    }
}

impl SvState {
    pub fn stationary_variance(&self) -> f64 {
        self.vol_of_vol.powi(2) / (1.0 - self.persistence.powi(2))
    }

    pub fn step(&mut self, shock: f64) {
        self.h = self.stationary_mean
            + self.persistence * (self.h - self.stationary_mean)
            + self.vol_of_vol * shock;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Scenario {
    GaussianGarch,
    StudentTGarch { nu: f64 },
    SkewNormalSv { shape: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub scenario: Scenario,
    pub length: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidInput(
                "simulation length must be at least 1".into(),
            ));
        }
        match self.scenario {
            Scenario::StudentTGarch { nu } if !(nu > 2.0 && nu.is_finite()) => {
                Err(Error::InvalidInput(format!(
                    "Student-t degrees of freedom must exceed 2, got {nu}"
                )))
            }
            Scenario::SkewNormalSv { shape } if !shape.is_finite() => Err(Error::InvalidInput(
                format!("non-finite skew-normal shape {shape}"),
            )),
            _ => Ok(()),
        }
    }
}

pub fn simulate(spec: &DgpSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.scenario {
        Scenario::GaussianGarch => Ok(simulate_garch(&mut rng, spec.length, |r| {
            r.sample(StandardNormal)
        })),
        Scenario::StudentTGarch { nu } => {
            let t = StudentT::new(nu).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let scale = ((nu - 2.0) / nu).sqrt();
            Ok(simulate_garch(&mut rng, spec.length, |r| {
                scale * t.sample(r)
            }))
        }
        Scenario::SkewNormalSv { shape } => simulate_sv(&mut rng, spec.length, shape),
    }
}

fn simulate_garch<R: Rng, F: FnMut(&mut R) -> f64>(
    rng: &mut R,
    length: usize,
    mut innovation: F,
) -> Vec<f64> {
    let mut s2 = GARCH_ALPHA0 / (1.0 - GARCH_ALPHA1 - GARCH_BETA1);
    let mut out = Vec::with_capacity(length);
    for i in 0..BURN_IN + length {
        let y = s2.sqrt() * innovation(rng);
        if i >= BURN_IN {
            out.push(y);
        }
        s2 = GARCH_ALPHA0 + GARCH_ALPHA1 * y * y + GARCH_BETA1 * s2;
    }
    out
}

fn simulate_sv<R: Rng>(rng: &mut R, length: usize, shape: f64) -> Result<Vec<f64>> {
    let mut state = SvState::default();
    let mut out = Vec::with_capacity(length);
    for i in 0..BURN_IN + length {
        let eta: f64 = rng.sample(StandardNormal);
        let eps: f64 = rng.sample(StandardNormal);
        state.step(eta);
        if i >= BURN_IN {
            let z = (state.h / 2.0).exp() * eps;
            let u = sv_marginal_cdf(z).clamp(1e-16, 1.0 - 1e-16);
            out.push(skew_normal_quantile(u, shape)?);
        }
    }
    Ok(out)
}

fn hermite64() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(64))
}

fn legendre16() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Stationary marginal CDF of `z = exp(h/2) eps`: the scale mixture
/// `E_h[Phi(z / exp(h/2))]` with `h` at its stationary normal law, evaluated
/// by 64-point Gauss–Hermite quadrature. Dividing by the summed weights
/// rather than `sqrt(pi)` makes `F(0) = 1/2` and the limits exact.
pub fn sv_marginal_cdf(z: f64) -> f64 {
    let sv = SvState::default();
    let m = sv.stationary_mean;
    let scale = (2.0 * sv.stationary_variance()).sqrt();
    let rule = hermite64();
    let mut acc = 0.0;
    let mut total = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let h = m + scale * x;
        acc += w * normal::cdf(z / (h / 2.0).exp());
        total += w;
    }
    acc / total
}

/// Owen's T function `T(h, a) = (1/2pi) * integral_0^a exp(-h^2 (1+x^2)/2) / (1+x^2) dx`.
pub fn owens_t(h: f64, a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if a < 0.0 {
        return -owens_t(h, -a);
    }
    let panels = ((a * h.abs().max(1.0) / 2.0).ceil() as usize).clamp(4, 400);
    let f = |x: f64| {
        let q = 1.0 + x * x;
        (-0.5 * h * h * q).exp() / q
    };
    integrate(f, 0.0, a, legendre16(), panels) / (2.0 * std::f64::consts::PI)
}

/// Density `2 phi(x) Phi(shape x)` of the standard skew-normal.
pub fn skew_normal_pdf(x: f64, shape: f64) -> f64 {
    2.0 * normal::pdf(x) * normal::cdf(shape * x)
}

pub fn skew_normal_cdf(x: f64, shape: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    (normal::cdf(x) - 2.0 * owens_t(x, shape)).clamp(0.0, 1.0)
}

/// Skew-normal quantile by safeguarded Newton iteration inside a bracket.
pub fn skew_normal_quantile(u: f64, shape: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(u));
    }
    if shape == 0.0 {
        return Ok(normal::quantile(u));
    }
    let mut lo = -10.0;
    let mut hi = 10.0;
    while skew_normal_cdf(lo, shape) > u {
        lo *= 2.0;
    }
    while skew_normal_cdf(hi, shape) < u {
        hi *= 2.0;
    }
    // Start from the normal quantile shifted by the skew-normal mean.
    let delta = shape / (1.0 + shape * shape).sqrt();
    let mut x = (normal::quantile(u) + delta * (2.0 / std::f64::consts::PI).sqrt()).clamp(lo, hi);
    for _ in 0..200 {
        let g = skew_normal_cdf(x, shape) - u;
        if g == 0.0 {
            return Ok(x);
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = skew_normal_pdf(x, shape);
        let mut next = if d > 0.0 { x - g / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() < 1e-12 || hi - lo < 1e-12 {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Deterministic per-task seed derived from a root seed (SplitMix64 finaliser).
pub fn derive_seed(root: u64, task: u64) -> u64 {
    let mut z = root ^ task.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
