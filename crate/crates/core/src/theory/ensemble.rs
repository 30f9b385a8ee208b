use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy_variance_bound, lkd_optimal_student, mtkd_optimal_student};
use crate::rng::substream;
use crate::{Error, Real, Result};

/// One teacher's per-class 1-D Gaussian moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClassModel<T> {
    pub means: Vec<T>,
    pub variances: Vec<T>,
}

/// `R` teachers, their per-class accuracies `tau[r][c]`, and the global
/// class means the students are compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherEnsemble<T> {
    pub teachers: Vec<GaussianClassModel<T>>,
    pub tau: Vec<Vec<T>>,
    pub global_means: Vec<T>,
}

impl<T: Real> TeacherEnsemble<T> {
    pub fn regions(&self) -> usize {
        self.teachers.len()
    }

    pub fn classes(&self) -> usize {
        self.global_means.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.classes();
        if self.teachers.is_empty() || c == 0 {
            return Err(Error::invalid("ensemble needs at least one teacher and one class"));
        }
        if self.tau.len() != self.regions() {
            return Err(Error::invalid("tau must have one row per teacher"));
        }
        for (t, tau) in self.teachers.iter().zip(&self.tau) {
            if t.means.len() != c || t.variances.len() != c || tau.len() != c {
                return Err(Error::invalid("teacher moments and tau must cover every class"));
            }
            if t.variances.iter().any(|&v| !(v > T::zero())) {
                return Err(Error::invalid("teacher variances must be positive"));
            }
            if tau.iter().any(|&a| !(a >= T::zero() && a <= T::one())) {
                return Err(Error::invalid("accuracies must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Whether class `c` has variances and absolute mean deviations both
    /// non-decreasing in teacher index.
    pub fn satisfies_ordering(&self, c: usize) -> bool {
        let mu_bar = self.global_means[c];
        self.teachers.windows(2).all(|w| {
            w[0].variances[c] <= w[1].variances[c] && (w[0].means[c] - mu_bar).abs() <= (w[1].means[c] - mu_bar).abs()
        })
    }
}

/// How accuracies are paired with the teachers' variances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderingMode {
    /// The most accurate teacher has the smallest variance and mean deviation.
    #[default]
    Consistent,
    /// Accuracies reversed: the noisiest teacher looks the most accurate.
    Inverted,
}

/// Direction of the teachers' mean deviations from the global class mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignMode {
    /// All teachers of a class err on the same side of `μ̄_c`.
    #[default]
    Shared,
    /// Each teacher's side is drawn independently.
    Mixed,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EnsembleOptions {
    pub ordering: OrderingMode,
    pub signs: SignMode,
}

/// Draws an ensemble of `regions` teachers over `classes` classes.
///
/// Per class: variances log-uniform in `[0.1, 10]` sorted ascending, mean
/// deviations uniform in `[0, 2]` sorted ascending, and accuracies from
/// [`accuracy_variance_bound`] with one decision margin shared by all teachers,
/// so a smaller variance always means a higher accuracy.
pub fn random_ensemble(regions: usize, classes: usize, opts: EnsembleOptions, rng: &mut impl rand::Rng) -> TeacherEnsemble<f64> {
    let mut teachers = vec![
        GaussianClassModel { means: vec![0.0; classes], variances: vec![0.0; classes] };
        regions
    ];
    let mut tau = vec![vec![0.0; classes]; regions];
    let mut global_means = vec![0.0; classes];
    let (lo, hi) = (0.1f64.ln(), 10f64.ln());
    for c in 0..classes {
        let mu_bar = rng.random_range(-5.0..5.0);
        global_means[c] = mu_bar;
        let b_c: f64 = rng.random_range(0.25..3.0);
        let mut vars: Vec<f64> = (0..regions).map(|_| rng.random_range(lo..hi).exp()).collect();
        vars.sort_by(f64::total_cmp);
        let mut devs: Vec<f64> = (0..regions).map(|_| rng.random_range(0.0..2.0)).collect();
        devs.sort_by(f64::total_cmp);
        let shared_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut accs: Vec<f64> = vars
            .iter()
            .map(|&v| accuracy_variance_bound(b_c, v.sqrt()).expect("variance is positive"))
            .collect();
        if opts.ordering == OrderingMode::Inverted {
            accs.reverse();
        }
        for r in 0..regions {
            let sign = match opts.signs {
                SignMode::Shared => shared_sign,
                SignMode::Mixed => {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            teachers[r].means[c] = mu_bar + sign * devs[r];
            teachers[r].variances[c] = vars[r];
            tau[r][c] = accs[r];
        }
    }
    TeacherEnsemble { teachers, tau, global_means }
}

/// Outcome of [`check_theorems`]. Gaps are `LKD − MTKD` (variance) and
/// `|μ_LKD − μ̄| − |μ_MTKD − μ̄|` (mean); both are `≤ 0` when the inequalities
/// hold, and the reported value is the largest seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub trials: usize,
    pub violations_t1: usize,
    pub violations_t2: usize,
    pub max_gap_t1: f64,
    pub max_gap_t2: f64,
}

const THEOREM_TOL: f64 = 1e-9;

/// Checks both inequalities on `trials` ensembles drawn with consistent
/// ordering and shared deviation signs.
pub fn check_theorems(trials: usize, regions: usize, classes: usize, seed: u64) -> Result<TheoremReport> {
    check_theorems_with(trials, regions, classes, seed, EnsembleOptions::default())
}

pub fn check_theorems_with(
    trials: usize,
    regions: usize,
    classes: usize,
    seed: u64,
    opts: EnsembleOptions,
) -> Result<TheoremReport> {
    if trials == 0 || regions == 0 || classes == 0 {
        return Err(Error::invalid("trials, regions and classes must be positive"));
    }
    let gaps: Vec<Vec<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = substream(seed, &format!("theory-trial-{trial}"));
            let ens = random_ensemble(regions, classes, opts, &mut rng);
            ensemble_gaps(&ens)
        })
        .collect::<Result<_>>()?;
    let mut report = TheoremReport {
        trials,
        violations_t1: 0,
        violations_t2: 0,
        max_gap_t1: f64::NEG_INFINITY,
        max_gap_t2: f64::NEG_INFINITY,
    };
    for trial in &gaps {
        let (mut bad1, mut bad2) = (false, false);
        for &(g1, g2) in trial {
            report.max_gap_t1 = report.max_gap_t1.max(g1);
            report.max_gap_t2 = report.max_gap_t2.max(g2);
            bad1 |= g1 > THEOREM_TOL;
            bad2 |= g2 > THEOREM_TOL;
        }
        report.violations_t1 += bad1 as usize;
        report.violations_t2 += bad2 as usize;
    }
    Ok(report)
}

/// Per-class `(variance gap, mean-distance gap)` of LKD against MTKD.
pub fn ensemble_gaps<T: Real>(ens: &TeacherEnsemble<T>) -> Result<Vec<(f64, f64)>> {
    ens.validate()?;
    (0..ens.classes())
        .map(|c| {
            let (mu_l, var_l) = lkd_optimal_student(ens, c)?;
            let (mu_m, var_m) = mtkd_optimal_student(ens, c)?;
            let mu_bar = ens.global_means[c];
            Ok((
                (var_l - var_m).as_f64(),
                ((mu_l - mu_bar).abs() - (mu_m - mu_bar).abs()).as_f64(),
            ))
        })
        .collect()
}
