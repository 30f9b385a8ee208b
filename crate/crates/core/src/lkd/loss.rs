use super::{align_samples, AlignedPool, DistillConfig, ReliabilityMatrix};
use crate::datagen::Dataset;
use crate::numerics::{prob, ModelParams, ProbVector, Tensor2};
use crate::{Error, Real, Result};

/// Class-conditioned output: `probs` when its argmax (lowest index on ties)
/// is `c`, otherwise the all-zero vector.
pub fn surrogate_prob<T: Real>(probs: &ProbVector<T>, c: usize) -> Result<ProbVector<T>> {
    if c >= probs.len() {
        return Err(Error::invalid(format!("class {c} out of range for {} classes", probs.len())));
    }
    Ok(if probs.argmax() == c { probs.clone() } else { ProbVector::zeros(probs.len()) })
}

fn check_aligned<T: Real>(aligned: &AlignedPool, weights: &[T], pool: &Dataset<T>) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::invalid("empty pool"));
    }
    if aligned.pool_size() != pool.len() {
        return Err(Error::invalid("alignment does not match the pool"));
    }
    if weights.len() != aligned.buckets.len() {
        return Err(Error::invalid("one weight per class required"));
    }
    Ok(())
}

/// `(1/S) Σ_c w[c] Σ_{i ∈ bucket c} KL(src_i || dst_i)` on precomputed
/// probability rows.
pub(crate) fn bucket_kl<T: Real>(src: &Tensor2<T>, dst: &Tensor2<T>, aligned: &AlignedPool, weights: &[T]) -> T {
    let mut total = T::zero();
    for (bucket, &w) in aligned.buckets.iter().zip(weights) {
        if w.is_zero() {
            continue;
        }
        let mut s = T::zero();
        for &i in bucket {
            s += prob::kl_terms(src.row(i), dst.row(i));
        }
        total += w * s;
    }
    (total / T::lit(aligned.pool_size() as f64)).max(T::zero())
}

/// Reliability-weighted KL from one teacher to the student over the pool
/// bucketed by that teacher's predictions, normalized by the pool size.
///
/// Inside bucket `c` the teacher's argmax is `c` by construction, so its
/// class-conditioned output equals its full softmax there.
pub fn teacher_loss<T: Real>(
    teacher: &ModelParams<T>,
    student: &ModelParams<T>,
    aligned: &AlignedPool,
    beta_row: &[T],
    t: T,
    pool: &Dataset<T>,
) -> Result<T> {
    check_aligned(aligned, beta_row, pool)?;
    let p = teacher.probabilities(pool.features(), t)?;
    let q = student.probabilities(pool.features(), t)?;
    Ok(bucket_kl(&p, &q, aligned, beta_row))
}

/// Reliability-weighted KL from the previous global model to the new one,
/// over the pool bucketed by the current global model.
pub fn update_loss<T: Real>(
    old: &ModelParams<T>,
    new: &ModelParams<T>,
    aligned_g: &AlignedPool,
    beta_old: &[T],
    t: T,
    pool: &Dataset<T>,
) -> Result<T> {
    check_aligned(aligned_g, beta_old, pool)?;
    let p = old.probabilities(pool.features(), t)?;
    let q = new.probabilities(pool.features(), t)?;
    Ok(bucket_kl(&p, &q, aligned_g, beta_old))
}

/// The weighted components of the joint objective.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLossParts<T> {
    pub teacher: Vec<T>,
    pub update: T,
    pub hard: T,
    pub lambdas: [T; 3],
}

impl<T: Real> JointLossParts<T> {
    pub fn total(&self) -> T {
        let [l1, l2, l3] = self.lambdas;
        l1 * self.teacher.iter().copied().sum::<T>() + l2 * self.update + l3 * self.hard
    }
}

pub(crate) fn mean_cross_entropy<T: Real>(student: &ModelParams<T>, pool: &Dataset<T>) -> Result<T> {
    let p = student.probabilities(pool.features(), T::one())?;
    let total: T = pool.labels().iter().enumerate().map(|(i, &y)| -prob::floored_ln(p.get(i, y))).sum();
    Ok(total / T::lit(pool.len() as f64))
}

/// `λ1 Σ_r teacher_loss_r + λ2 update_loss + λ3 CE` with every teacher
/// aligning the pool itself and the update term aligned by `student`.
/// The hard term is the student's mean cross-entropy at temperature 1.
pub fn joint_loss<T: Real>(
    teachers: &[ModelParams<T>],
    student: &ModelParams<T>,
    old_global: &ModelParams<T>,
    pool: &Dataset<T>,
    rel: &ReliabilityMatrix<T>,
    cfg: &DistillConfig,
) -> Result<JointLossParts<T>> {
    if teachers.len() != rel.regions() {
        return Err(Error::invalid("one reliability row per teacher required"));
    }
    let [l1, l2, l3] = cfg.coefficients(teachers.len())?;
    let t = T::lit(cfg.temperature);
    let teacher = teachers
        .iter()
        .zip(&rel.beta)
        .enumerate()
        .map(|(r, (m, beta))| {
            let aligned = align_samples(m, pool, &format!("region_{r}"))?;
            teacher_loss(m, student, &aligned, beta, t, pool)
        })
        .collect::<Result<Vec<_>>>()?;
    let update = match (&rel.beta_old, l2 > 0.0) {
        (Some(beta_old), true) => {
            let aligned_g = align_samples(student, pool, "global")?;
            update_loss(old_global, student, &aligned_g, beta_old, t, pool)?
        }
        (None, true) => return Err(Error::invalid("update term requested without old-model reliability")),
        (_, false) => T::zero(),
    };
    let hard = mean_cross_entropy(student, pool)?;
    Ok(JointLossParts { teacher, update, hard, lambdas: [T::lit(l1), T::lit(l2), T::lit(l3)] })
}
