//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the crate's numerical routines: every oracle is
//! written from the textbook definition so that agreement means something.

#![allow(dead_code)]

use std::path::PathBuf;

use fedlkd::numerics::{ModelParams, Tensor2};
use rand::Rng;

/// Directory holding the bundled desk-scale configurations.
pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // Start from a handful of panels so a narrow peak cannot hide between
    // the first three sample points.
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            adaptive(f, lo, hi, fa, fm, fb, simpson(lo, hi, fa, fm, fb), tol / panels as f64, 40)
        })
        .sum()
}

/// `∫ p ln(p/q)` for `p = N(mp, vp)`, `q = N(mq, vq)` by quadrature over
/// `mp ± 14 σp`, beyond which `p` carries less than 1e-40 of its mass.
pub fn kl_quadrature(mp: f64, vp: f64, mq: f64, vq: f64) -> f64 {
    let s = vp.sqrt();
    let f = |x: f64| {
        let lp = ln_normal_pdf(x, mp, vp);
        lp.exp() * (lp - ln_normal_pdf(x, mq, vq))
    };
    integrate(&f, mp - 14.0 * s, mp + 14.0 * s, 1e-11)
}

/// Closed-form Gaussian KL written out independently of the library.
pub fn kl_closed(mp: f64, vp: f64, mq: f64, vq: f64) -> f64 {
    0.5 * ((vq / vp).ln() + (vp + (mp - mq).powi(2)) / vq - 1.0)
}

/// `Σ_r w_r KL(N(μ_r, σ²_r) || N(mean, var))`.
pub fn weighted_kl_objective(means: &[f64], vars: &[f64], weights: &[f64], mean: f64, var: f64) -> f64 {
    means.iter().zip(vars).zip(weights).map(|((&m, &v), &w)| w * kl_closed(m, v, mean, var)).sum()
}

/// Minimizer of `objective(μ, σ²)` by an `n × n` grid over the box followed
/// by one `n × n` refinement over the cells adjacent to the best point.
pub fn grid_minimize(objective: &dyn Fn(f64, f64) -> f64, mu: (f64, f64), var: (f64, f64), n: usize) -> (f64, f64) {
    let scan = |mu: (f64, f64), var: (f64, f64)| {
        let (dm, dv) = ((mu.1 - mu.0) / (n - 1) as f64, (var.1 - var.0) / (n - 1) as f64);
        let mut best = (f64::INFINITY, mu.0, var.0);
        for i in 0..n {
            let m = mu.0 + i as f64 * dm;
            for j in 0..n {
                let v = var.0 + j as f64 * dv;
                let val = objective(m, v);
                if val < best.0 {
                    best = (val, m, v);
                }
            }
        }
        (best.1, best.2, dm, dv)
    };
    let (m, v, dm, dv) = scan(mu, var);
    let (m, v, _, _) = scan((m - dm, m + dm), ((v - dv).max(var.0), (v + dv).min(var.1)));
    (m, v)
}

/// AUC by counting every (positive, negative) pair; ties count one half.
pub fn auc_pair_count(scores: &[f64], positives: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !positives[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positives[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Central difference `(f(x + h) − f(x − h)) / 2h` for every coordinate.
pub fn central_differences(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Sample covariance of coordinates `i` and `j` with its standard error.
pub fn sample_covariance(draws: &[Vec<f64>], i: usize, j: usize) -> (f64, f64) {
    let n = draws.len() as f64;
    let mi = draws.iter().map(|d| d[i]).sum::<f64>() / n;
    let mj = draws.iter().map(|d| d[j]).sum::<f64>() / n;
    let z: Vec<f64> = draws.iter().map(|d| (d[i] - mi) * (d[j] - mj)).collect();
    let cov = z.iter().sum::<f64>() / n;
    let var_z = z.iter().map(|x| (x - cov).powi(2)).sum::<f64>() / (n - 1.0);
    (cov, (var_z / n).sqrt())
}

pub fn random_batch(rng: &mut impl Rng, rows: usize, dim: usize, classes: usize) -> (Tensor2<f64>, Vec<usize>) {
    let data = (0..rows * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    (Tensor2::new(rows, dim, data).unwrap(), labels)
}

pub fn random_shapes(rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let depth = rng.random_range(1..=3);
    let mut width = rng.random_range(2..=5);
    let mut shapes = Vec::new();
    for _ in 0..depth {
        let next = rng.random_range(2..=5);
        shapes.push((width, next));
        width = next;
    }
    shapes
}

/// A random 1–3 layer net with every parameter jittered away from its
/// initial value. Fresh biases are zero, which can put a unit whose inputs
/// are all dead exactly on the ReLU kink.
pub fn jittered_net(rng: &mut impl Rng, seed: u64) -> ModelParams<f64> {
    let init = ModelParams::<f64>::init(random_shapes(rng), seed).unwrap();
    let values = init.values().iter().map(|&w| w + rng.random_range(-0.1..0.1)).collect();
    init.with_values(values).unwrap()
}
