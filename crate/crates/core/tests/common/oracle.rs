//! Reference computations written independently of the library: Simpson
//! quadrature, bisection, a separate GARCH simulator and likelihood, and a
//! Newton-type maximum likelihood routine.

use std::sync::OnceLock;

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

pub fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Standard normal CDF by Simpson quadrature of the density from 0.
pub fn quad_cdf(x: f64) -> f64 {
    let half = simpson(std_pdf, 0.0, x.abs(), 4000);
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Root of an increasing function on `[lo, hi]` by bisection.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn statrs_std() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

pub fn std_quantile(p: f64) -> f64 {
    statrs_std().inverse_cdf(p)
}

/// Expected shortfall of N(mean, sd^2) as `(1/p) * int_0^p VaR_a da`, with
/// `a = p e^{-s}` to remove the endpoint singularity.
pub fn es_by_integration(mean: f64, sd: f64, p: f64) -> f64 {
    let n = statrs_std();
    let f = |s: f64| {
        let a = p * (-s).exp();
        (mean + sd * n.inverse_cdf(a)) * a
    };
    simpson(f, 0.0, 60.0, 20000) / p
}

/// Gaussian GARCH(1,1) path with its true conditional variances.
pub fn garch_path(seed: u64, n: usize, a0: f64, a1: f64, b1: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s2 = a0 / (1.0 - a1 - b1);
    let mut ys = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for i in 0..(500 + n) {
        let e: f64 = StandardNormal.sample(&mut rng);
        let y = s2.sqrt() * e;
        if i >= 500 {
            ys.push(y);
            vs.push(s2);
        }
        s2 = a0 + a1 * y * y + b1 * s2;
    }
    (ys, vs)
}

/// Average Gaussian log-likelihood of `y[1..]` under GARCH(1,1) with
/// `theta = (mu, alpha0, alpha1, beta1)`, started at the sample variance
/// (divisor n). `-inf` outside the stationary region.
pub fn garch_avg_loglik(theta: &[f64; 4], y: &[f64]) -> f64 {
    let [mu, a0, a1, b1] = *theta;
    if !(a0 > 0.0 && a1 >= 0.0 && b1 >= 0.0 && a1 + b1 < 1.0) {
        return f64::NEG_INFINITY;
    }
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let mut s2 = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    let mut ll = 0.0;
    for t in 1..y.len() {
        let e_prev = y[t - 1] - mu;
        s2 = a0 + a1 * e_prev * e_prev + b1 * s2;
        let e = y[t] - mu;
        ll += -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - 0.5 * e * e / s2;
    }
    ll / (n - 1.0)
}

/// Damped Newton maximisation of [`garch_avg_loglik`] with central
/// finite-difference derivatives.
pub fn newton_mle(y: &[f64], start: [f64; 4]) -> [f64; 4] {
    let f = |t: &[f64; 4]| garch_avg_loglik(t, y);
    let mut theta = start;
    let mut value = f(&theta);
    for _ in 0..200 {
        let h: [f64; 4] = std::array::from_fn(|i| 1e-5 * theta[i].abs().max(1e-2));
        let shifted = |i: usize, di: f64, j: usize, dj: f64| {
            let mut t = theta;
            t[i] += di;
            t[j] += dj;
            f(&t)
        };
        let mut g = Vector4::zeros();
        let mut hess = Matrix4::zeros();
        for i in 0..4 {
            g[i] = (shifted(i, h[i], i, 0.0) - shifted(i, -h[i], i, 0.0)) / (2.0 * h[i]);
            hess[(i, i)] = (shifted(i, h[i], i, 0.0) - 2.0 * value + shifted(i, -h[i], i, 0.0))
                / (h[i] * h[i]);
            for j in 0..i {
                let v = (shifted(i, h[i], j, h[j])
                    - shifted(i, h[i], j, -h[j])
                    - shifted(i, -h[i], j, h[j])
                    + shifted(i, -h[i], j, -h[j]))
                    / (4.0 * h[i] * h[j]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        // Newton direction when the Hessian is negative definite, otherwise gradient ascent.
        let direction = match (-hess).cholesky() {
            Some(chol) => chol.solve(&g),
            None => g * 1e-3,
        };
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-12 {
            let cand: [f64; 4] = std::array::from_fn(|i| theta[i] + step * direction[i]);
            let v = f(&cand);
            if v >= value {
                let moved = (0..4)
                    .map(|i| (cand[i] - theta[i]).abs())
                    .fold(0.0, f64::max);
                theta = cand;
                value = v;
                improved = moved > 1e-11;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    theta
}

/// Scenario (i) sample shared by the consistency checks.
pub fn sample_50k() -> &'static Vec<f64> {
    static DATA: OnceLock<Vec<f64>> = OnceLock::new();
    DATA.get_or_init(|| {
        tailcal::simulation::simulate(&tailcal::simulation::DgpSpec {
            scenario: tailcal::simulation::Scenario::GaussianGarch,
            length: 50_000,
            seed: 20_250_101,
        })
        .expect("simulation")
    })
}

/// LS calibration of the GARCH predictive on [`sample_50k`].
pub fn ls_fit_50k() -> &'static tailcal::calibration::CalibrationResult {
    static FIT: OnceLock<tailcal::calibration::CalibrationResult> = OnceLock::new();
    FIT.get_or_init(|| {
        tailcal::calibration::calibrate(&tailcal::calibration::CalibrationProblem {
            model: tailcal::ModelKind::Garch,
            score: tailcal::ScoreSpec::Ls,
            data: sample_50k().clone(),
            initial_params: None,
        })
        .expect("calibration")
    })
}

/// Kolmogorov distribution tail `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

/// Batch-means standard error of the mean of a dependent series.
pub fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}
