//! Nelder–Mead simplex maximiser.
//!
//! Only comparisons of objective values drive the search, so a positive
//! rescaling of the objective that preserves ordering leaves the trajectory
//! unchanged. Non-finite values rank below every finite value.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Stop when every vertex lies within this sup-norm distance of the best.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial edge length along each coordinate.
    pub initial_step: f64,
    /// Restart from the best vertex after the first convergence.
    pub restarts: usize,
    /// Optional per-coordinate box; trial points are clamped into it.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 2000,
            initial_step: 0.1,
            restarts: 1,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximise `f` starting from `x0`.
pub fn maximize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let mut start = x0.to_vec();
    clamp(&mut start, opts.bounds.as_deref());
    let mut total_iters = 0;
    let mut result = run(&mut f, &start, opts, &mut total_iters);
    for _ in 0..opts.restarts {
        if !result.converged {
            break;
        }
        let again = run(&mut f, &result.x, opts, &mut total_iters);
        let improved = again.value >= result.value;
        result = if improved {
            again
        } else {
            NelderMeadResult {
                converged: again.converged,
                ..result
            }
        };
    }
    result.iterations = total_iters;
    result
}

fn clamp(x: &mut [f64], bounds: Option<&[(f64, f64)]>) {
    if let Some(b) = bounds {
        for (xi, &(lo, hi)) in x.iter_mut().zip(b) {
            *xi = xi.clamp(lo, hi);
        }
    }
}

fn run<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    opts: &NelderMeadOptions,
    total_iters: &mut usize,
) -> NelderMeadResult {
    let n = x0.len();
    let bounds = opts.bounds.as_deref();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        if let Some(b) = bounds {
            if v[i] > b[i].1 {
                v[i] = x0[i] - opts.initial_step;
            }
        }
        clamp(&mut v, bounds);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| sanitize(f(v))).collect();

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // Best first.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < opts.tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp(&mut p, bounds);
            p
        };

        let worst = values[n];
        let second_worst = values[n - 1];
        let best = values[0];

        let reflected = along(1.0);
        let fr = sanitize(f(&reflected));
        if fr > best {
            let expanded = along(2.0);
            let fe = sanitize(f(&expanded));
            if fe > fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr > second_worst {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        // Outside contraction must beat the reflection, inside must beat the worst.
        let outside = fr > worst;
        let contracted = along(if outside { 0.5 } else { -0.5 });
        let fc = sanitize(f(&contracted));
        let accept = if outside { fc >= fr } else { fc > worst };
        if accept {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        for i in 1..=n {
            let mut p: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            clamp(&mut p, bounds);
            values[i] = sanitize(f(&p));
            simplex[i] = p;
        }
    }
    *total_iters += iterations;
    NelderMeadResult {
        x: simplex[0].clone(),
        value: values[0],
        iterations,
        converged,
    }
}
