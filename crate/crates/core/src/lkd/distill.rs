use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::align::{align_samples, AlignedPool};
use super::loss::{bucket_kl, mean_cross_entropy};
use super::reliability::{class_aucs, old_from_aucs, reliability_from_aucs};
use super::{DistillConfig, ReliabilityMatrix};
use crate::datagen::Dataset;
use crate::numerics::{prob, ModelParams, Tensor2};
use crate::{Error, Real, Result};

/// Result of a distillation run.
#[derive(Debug, Clone)]
pub struct DistillOutcome<T> {
    pub model: ModelParams<T>,
    /// Reliability used in the last epoch, including `beta_old` when the
    /// update term is active.
    pub reliability: ReliabilityMatrix<T>,
    /// Joint loss over the whole pool at the end of each epoch.
    pub losses: Vec<f64>,
}

/// Trains `student_init` on the joint objective for `cfg.server_epochs`
/// epochs of shuffled mini-batch gradient descent over `pool`.
pub fn distill<T: Real>(
    teachers: &[ModelParams<T>],
    student_init: &ModelParams<T>,
    old_global: &ModelParams<T>,
    pool: &Dataset<T>,
    valset: &Dataset<T>,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<ModelParams<T>> {
    distill_with_trace(teachers, student_init, old_global, pool, valset, cfg, seed).map(|o| o.model)
}

// Teacher-side quantities. Teachers are frozen during distillation, so their
// reliability and alignment come out the same in every epoch.
struct TeacherTargets<T> {
    beta: Vec<Vec<T>>,
    aligned: Vec<AlignedPool>,
    probs: Vec<Tensor2<T>>,
    // Σ_r β_r[a_r(i)] per sample, and Σ_r β_r[a_r(i)] p_r(i) per sample row.
    weight: Vec<T>,
    mixture: Tensor2<T>,
}

fn teacher_targets<T: Real>(
    teachers: &[ModelParams<T>],
    pool: &Dataset<T>,
    valset: &Dataset<T>,
    t: T,
    t_omega: T,
) -> Result<TeacherTargets<T>> {
    let per_teacher = teachers
        .par_iter()
        .enumerate()
        .map(|(r, m)| -> Result<_> {
            let aucs = class_aucs(m, valset)?;
            let aligned = align_samples(m, pool, &format!("region_{r}"))?;
            let probs = m.probabilities(pool.features(), t)?;
            Ok((aucs, aligned, probs))
        })
        .collect::<Result<Vec<_>>>()?;
    let aucs: Vec<Vec<T>> = per_teacher.iter().map(|(a, _, _)| a.clone()).collect();
    let beta = reliability_from_aucs(&aucs, t_omega);
    let (aligned, probs): (Vec<_>, Vec<_>) = per_teacher.into_iter().map(|(_, a, p)| (a, p)).unzip();

    let n = pool.len();
    let c = pool.class_count();
    let mut weight = vec![T::zero(); n];
    let mut mixture = vec![T::zero(); n * c];
    for r in 0..teachers.len() {
        for i in 0..n {
            let w = beta[r][aligned[r].assignment[i]];
            weight[i] += w;
            for (m, &p) in mixture[i * c..(i + 1) * c].iter_mut().zip(probs[r].row(i)) {
                *m += w * p;
            }
        }
    }
    Ok(TeacherTargets { beta, aligned, probs, weight, mixture: Tensor2::new(n, c, mixture)? })
}

/// [`distill`] that also reports the per-epoch joint loss and the final
/// reliability matrix.
pub fn distill_with_trace<T: Real>(
    teachers: &[ModelParams<T>],
    student_init: &ModelParams<T>,
    old_global: &ModelParams<T>,
    pool: &Dataset<T>,
    valset: &Dataset<T>,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<DistillOutcome<T>> {
    cfg.validate()?;
    if teachers.is_empty() {
        return Err(Error::invalid("need at least one teacher"));
    }
    if pool.is_empty() || valset.is_empty() {
        return Err(Error::invalid("pool and validation set must be non-empty"));
    }
    if teachers.iter().chain([old_global]).any(|m| !m.same_shape(student_init)) {
        return Err(Error::invalid("teachers, student and old global model must share a shape"));
    }
    if pool.class_count() != student_init.num_classes() {
        return Err(Error::invalid("pool class count does not match the model"));
    }
    let [l1, l2, l3] = cfg.coefficients(teachers.len())?;
    let use_update = cfg.use_update_distillation && l2 > 0.0;
    let t = T::lit(cfg.temperature);
    let t_omega = T::lit(cfg.t_omega);

    if cfg.server_epochs == 0 {
        let beta = teacher_targets(teachers, pool, valset, t, t_omega)?.beta;
        return Ok(DistillOutcome {
            model: student_init.clone(),
            reliability: ReliabilityMatrix { beta, beta_old: None, t_omega },
            losses: Vec::new(),
        });
    }

    let targets = teacher_targets(teachers, pool, valset, t, t_omega)?;
    let (old_probs, old_aucs) = if use_update {
        (Some(old_global.probabilities(pool.features(), t)?), Some(class_aucs(old_global, valset)?))
    } else {
        (None, None)
    };

    let n = pool.len();
    let c = pool.class_count();
    let (tl1, tl2, tl3) = (T::lit(l1), T::lit(l2), T::lit(l3));
    let lr = T::lit(cfg.server_lr);
    let mut rng = crate::rng::substream(seed, "distill");
    let mut order: Vec<usize> = (0..n).collect();
    let mut student = student_init.clone();
    let mut losses = Vec::with_capacity(cfg.server_epochs);
    let mut beta_old: Option<Vec<T>> = None;

    for _ in 0..cfg.server_epochs {
        // Student-dependent pieces: reliability of the old model against the
        // current student, and the pool aligned by the current student.
        let (update_weight, update_mix, aligned_g) = match (&old_probs, &old_aucs) {
            (Some(op), Some(oa)) => {
                let b_old = old_from_aucs(oa, &class_aucs(&student, valset)?, t_omega);
                let aligned_g = align_samples(&student, pool, "global")?;
                let w: Vec<T> = aligned_g.assignment.iter().map(|&a| tl2 * b_old[a]).collect();
                beta_old = Some(b_old);
                (Some(w), Some(op), Some(aligned_g))
            }
            _ => (None, None, None),
        };

        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = pool.features().select_rows(chunk);
            let inv_b = T::one() / T::lit(chunk.len() as f64);
            let mut q1 = vec![T::zero(); c];
            let grad = student.backprop(&batch, |row, z, d| {
                let i = chunk[row];
                prob::softmax_into(z, t, d);
                let mut w = tl1 * targets.weight[i];
                if let Some(uw) = &update_weight {
                    w += uw[i];
                }
                let mix = targets.mixture.row(i);
                for l in 0..c {
                    let mut target = tl1 * mix[l];
                    if let (Some(uw), Some(op)) = (&update_weight, update_mix) {
                        target += uw[i] * op.get(i, l);
                    }
                    d[l] = (w * d[l] - target) / t;
                }
                if l3 > 0.0 {
                    prob::softmax_into(z, T::one(), &mut q1);
                    q1[pool.labels()[i]] -= T::one();
                    for (dl, &g) in d.iter_mut().zip(&q1) {
                        *dl += tl3 * g;
                    }
                }
                for dl in d.iter_mut() {
                    *dl *= inv_b;
                }
            })?;
            student = student.apply_gradient(&grad, lr)?;
        }

        let q = student.probabilities(pool.features(), t)?;
        let mut total = T::zero();
        for (r, probs) in targets.probs.iter().enumerate() {
            total += tl1 * bucket_kl(probs, &q, &targets.aligned[r], &targets.beta[r]);
        }
        if let (Some(op), Some(ag), Some(b)) = (update_mix, &aligned_g, &beta_old) {
            total += tl2 * bucket_kl(op, &q, ag, b);
        }
        total += tl3 * mean_cross_entropy(&student, pool)?;
        losses.push(total.as_f64());
    }

    Ok(DistillOutcome {
        model: student,
        reliability: ReliabilityMatrix { beta: targets.beta, beta_old, t_omega },
        losses,
    })
}
