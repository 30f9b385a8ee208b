use crate::{Error, Real, Result};

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// A probability vector over `C` classes, or the all-zero vector produced by
/// the class-conditioned surrogate output.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector<T>(Vec<T>);

fn sum_tolerance<T: Real>(len: usize) -> f64 {
    (16.0 * T::epsilon().as_f64() * len.max(1) as f64).max(1e-9)
}

impl<T: Real> ProbVector<T> {
    pub fn new(entries: Vec<T>) -> Result<Self> {
        if entries.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total: T = entries.iter().copied().sum();
        let all_zero = entries.iter().all(|p| p.is_zero());
        if !all_zero && (total.as_f64() - 1.0).abs() > sum_tolerance::<T>(entries.len()) {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self(entries))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![T::zero(); len])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|p| p.is_zero())
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Softmax of `logits / t`, shifted by the maximum logit for stability.
pub fn temp_softmax<T: Real>(logits: &[T], t: T) -> Result<ProbVector<T>> {
    if !(t > T::zero()) || !t.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {t}")));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("non-finite logit"));
    }
    let mut out = vec![T::zero(); logits.len()];
    softmax_into(logits, t, &mut out);
    Ok(ProbVector(out))
}

pub(crate) fn softmax_into<T: Real>(logits: &[T], t: T, out: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = ((z - max) / t).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn floored_ln<T: Real>(p: T) -> T {
    p.max(T::lit(PROB_FLOOR)).ln()
}

pub(crate) fn kl_terms<T: Real>(p: &[T], q: &[T]) -> T {
    let mut acc = T::zero();
    for (&pl, &ql) in p.iter().zip(q) {
        if pl > T::zero() {
            acc += pl * (pl.ln() - floored_ln(ql));
        }
    }
    acc
}

/// `KL(p || q)` with `0 ln 0 = 0` and `q` floored before the logarithm.
pub fn kl_divergence<T: Real>(p: &ProbVector<T>, q: &ProbVector<T>) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!("length mismatch {} vs {}", p.len(), q.len())));
    }
    // Flooring q can push tiny negative rounding below zero.
    Ok(kl_terms(&p.0, &q.0).max(T::zero()))
}

/// Negative log-likelihood of `label`.
pub fn cross_entropy<T: Real>(probs: &ProbVector<T>, label: usize) -> Result<T> {
    let p = probs
        .0
        .get(label)
        .ok_or_else(|| Error::invalid(format!("label {label} out of range for {} classes", probs.len())))?;
    Ok(-floored_ln(*p))
}
