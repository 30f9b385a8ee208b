use std::sync::atomic::{AtomicU64, Ordering};

use crate::datagen::Dataset;
use crate::numerics::{argmax, ModelParams};
use crate::{Real, Result};

/// The server pool bucketed by one model's predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedPool {
    /// `buckets[c]` holds pool indices the model labels `c`, ascending.
    pub buckets: Vec<Vec<usize>>,
    /// Predicted class per pool sample.
    pub assignment: Vec<usize>,
    /// Identifier of the model that produced the alignment.
    pub source: String,
}

impl AlignedPool {
    pub fn from_assignment(assignment: Vec<usize>, classes: usize, source: impl Into<String>) -> Self {
        let mut buckets = vec![Vec::new(); classes];
        for (i, &c) in assignment.iter().enumerate() {
            buckets[c].push(i);
        }
        let pool = Self { buckets, assignment, source: source.into() };
        debug_assert!(pool.is_consistent());
        pool
    }

    pub fn pool_size(&self) -> usize {
        self.assignment.len()
    }

    pub fn bucket_sizes(&self) -> Vec<usize> {
        self.buckets.iter().map(Vec::len).collect()
    }

    /// Bucket sizes sum to the pool size and every sample sits in exactly the
    /// bucket of its assigned class.
    pub fn is_consistent(&self) -> bool {
        let total: usize = self.buckets.iter().map(Vec::len).sum();
        total == self.assignment.len()
            && self
                .buckets
                .iter()
                .enumerate()
                .all(|(c, b)| b.iter().all(|&i| self.assignment.get(i) == Some(&c)))
    }
}

static ALIGN_CALLS: AtomicU64 = AtomicU64::new(0);
static ALIGN_VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of [`align_samples`] calls, and of calls whose bucket
/// sizes did not add up to the pool size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignmentAudit {
    pub calls: u64,
    pub violations: u64,
}

pub fn alignment_audit() -> AlignmentAudit {
    AlignmentAudit {
        calls: ALIGN_CALLS.load(Ordering::Relaxed),
        violations: ALIGN_VIOLATIONS.load(Ordering::Relaxed),
    }
}

/// Assigns every pool sample to the bucket of the model's argmax class.
pub fn align_samples<T: Real>(model: &ModelParams<T>, pool: &Dataset<T>, source: &str) -> Result<AlignedPool> {
    let logits = model.forward(pool.features())?;
    let assignment = (0..logits.rows()).map(|r| argmax(logits.row(r))).collect();
    let aligned = AlignedPool::from_assignment(assignment, model.num_classes(), source);
    ALIGN_CALLS.fetch_add(1, Ordering::Relaxed);
    if aligned.bucket_sizes().iter().sum::<usize>() != pool.len() || !aligned.is_consistent() {
        ALIGN_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    }
    Ok(aligned)
}
