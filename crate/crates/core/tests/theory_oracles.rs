//! Gaussian closed forms against quadrature, grid search and sampling.

mod common;

use common::{grid_minimize, kl_quadrature, rel_err, sample_covariance, weighted_kl_objective};
use fedlkd::datagen::sample_dirichlet;
use fedlkd::rng::substream;
use fedlkd::theory::{dirichlet_covariance, gaussian_kl, lkd_optimal_student, random_ensemble, EnsembleOptions};
use rand::Rng;

#[test]
fn gaussian_kl_matches_quadrature() {
    let mut rng = substream(11, "kl-pairs");
    for _ in 0..100 {
        let (mp, mq) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (vp, vq) = (rng.random_range(0.2..4.0), rng.random_range(0.2..4.0));
        let closed: f64 = gaussian_kl((mp, vp), (mq, vq)).unwrap();
        let numeric = kl_quadrature(mp, vp, mq, vq);
        assert!((closed - numeric).abs() < 1e-6, "({mp}, {vp}) || ({mq}, {vq}): {closed} vs {numeric}");
    }
}

// Weights e^{τ} for class `c`, shifted by the max for stability.
fn weights(tau: &[Vec<f64>], c: usize) -> Vec<f64> {
    let top = tau.iter().map(|row| row[c]).fold(f64::NEG_INFINITY, f64::max);
    tau.iter().map(|row| (row[c] - top).exp()).collect()
}

#[test]
fn optimal_student_mean_matches_grid_search() {
    let mut rng = substream(3, "student-grid");
    for _ in 0..10 {
        let ens = random_ensemble(3, 2, EnsembleOptions::default(), &mut rng);
        for c in 0..2 {
            let means: Vec<f64> = ens.teachers.iter().map(|t| t.means[c]).collect();
            let vars: Vec<f64> = ens.teachers.iter().map(|t| t.variances[c]).collect();
            let w = weights(&ens.tau, c);
            let (lo_m, hi_m) = (means.iter().copied().fold(f64::INFINITY, f64::min), means.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            let hi_v = vars.iter().copied().fold(0.0, f64::max) + (hi_m - lo_m).powi(2);
            let lo_v = vars.iter().copied().fold(f64::INFINITY, f64::min);
            let obj = |m: f64, v: f64| weighted_kl_objective(&means, &vars, &w, m, v);
            let (gm, gv) = grid_minimize(&obj, (lo_m - 3.0, hi_m + 3.0), (0.5 * lo_v, 2.0 * hi_v), 200);

            let (mu, _) = lkd_optimal_student(&ens, c).unwrap();
            assert!(rel_err(mu, gm, 1.0) < 1e-3, "mean {mu} vs grid {gm}");

            // The minimizing variance is the mixture's second central moment:
            // the spread of the teacher means adds to the averaged variances.
            let total: f64 = w.iter().sum();
            let moment = w.iter().zip(&vars).zip(&means).map(|((&wi, &v), &m)| wi * (v + (m - mu).powi(2))).sum::<f64>() / total;
            assert!(rel_err(moment, gv, 1.0) < 1e-3, "variance {moment} vs grid {gv}");
        }
    }
}

#[test]
fn optimal_student_variance_matches_grid_when_means_coincide() {
    let mut rng = substream(5, "student-grid-shared-mean");
    for _ in 0..10 {
        let mut ens = random_ensemble(3, 1, EnsembleOptions::default(), &mut rng);
        let shared = ens.global_means[0];
        for t in &mut ens.teachers {
            t.means[0] = shared;
        }
        let vars: Vec<f64> = ens.teachers.iter().map(|t| t.variances[0]).collect();
        let means = vec![shared; vars.len()];
        let w = weights(&ens.tau, 0);
        let (lo_v, hi_v) = (vars.iter().copied().fold(f64::INFINITY, f64::min), vars.iter().copied().fold(0.0, f64::max));
        let obj = |m: f64, v: f64| weighted_kl_objective(&means, &vars, &w, m, v);
        let (gm, gv) = grid_minimize(&obj, (shared - 3.0, shared + 3.0), (0.5 * lo_v, 2.0 * hi_v), 200);
        let (mu, var) = lkd_optimal_student(&ens, 0).unwrap();
        assert!(rel_err(mu, gm, 1.0) < 1e-3);
        assert!(rel_err(var, gv, 1.0) < 1e-3, "variance {var} vs grid {gv}");
    }
}

#[test]
fn dirichlet_covariance_matches_monte_carlo() {
    let configs: [&[f64]; 3] = [&[1.0, 1.0, 1.0], &[0.5, 2.0, 3.5], &[0.1, 0.1, 0.1, 0.1, 0.1]];
    for (k, nu) in configs.iter().enumerate() {
        let mut rng = substream(k as u64, "dirichlet-mc");
        let draws: Vec<Vec<f64>> = (0..100_000).map(|_| sample_dirichlet(nu, &mut rng).unwrap()).collect();
        for (i, j) in [(0, 1), (1, 2)] {
            let expected: f64 = dirichlet_covariance(nu, i, j).unwrap();
            let (cov, se) = sample_covariance(&draws, i, j);
            assert!((cov - expected).abs() <= 3.0 * se, "nu {nu:?} ({i},{j}): {cov} vs {expected} (se {se})");
        }
    }
}
