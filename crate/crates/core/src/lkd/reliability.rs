use std::io::Write;

use crate::datagen::Dataset;
use crate::numerics::ModelParams;
use crate::{Error, Real, Result};

/// Per-class reliability weights: `beta[r][c]` for each teacher and,
/// optionally, `beta_old[c]` for the previous global model.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityMatrix<T> {
    pub beta: Vec<Vec<T>>,
    pub beta_old: Option<Vec<T>>,
    pub t_omega: T,
}

impl<T: Real> ReliabilityMatrix<T> {
    pub fn regions(&self) -> usize {
        self.beta.len()
    }

    pub fn classes(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    /// CSV with one row per region plus an `old` row when present; columns
    /// are `source,class_0..class_{C-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["source".to_string()];
        header.extend((0..self.classes()).map(|c| format!("class_{c}")));
        w.write_record(&header)?;
        let rows = self
            .beta
            .iter()
            .enumerate()
            .map(|(r, row)| (format!("region_{r}"), row))
            .chain(self.beta_old.iter().map(|row| ("old".to_string(), row)));
        for (name, row) in rows {
            let mut rec = vec![name];
            rec.extend(row.iter().map(|b| b.as_f64().to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs where the
/// positive scores higher, ties counting one half.
pub fn auc_ovr<T: Real>(scores: &[T], positives: &[bool]) -> Result<T> {
    if scores.len() != positives.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Sum of midranks (1-based) of the positives.
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| positives[k]).count();
        rank_sum += midrank * pos_in_group as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(T::lit(u / (n_pos as f64 * n_neg as f64)))
}

/// One-vs-rest AUC of the class-`c` probability for every class. Classes
/// with no positives or no negatives in `valset` score 0.5.
pub fn class_aucs<T: Real>(model: &ModelParams<T>, valset: &Dataset<T>) -> Result<Vec<T>> {
    if valset.is_empty() {
        return Err(Error::invalid("empty validation set"));
    }
    let probs = model.probabilities(valset.features(), T::one())?;
    let classes = model.num_classes();
    let mut scores = vec![T::zero(); valset.len()];
    let mut positives = vec![false; valset.len()];
    (0..classes)
        .map(|c| {
            for r in 0..valset.len() {
                scores[r] = probs.get(r, c);
                positives[r] = valset.labels()[r] == c;
            }
            match auc_ovr(&scores, &positives) {
                Err(Error::DegenerateClass) => Ok(T::lit(0.5)),
                other => other,
            }
        })
        .collect()
}

fn softmax_scaled<T: Real>(xs: &[T], t: T) -> Vec<T> {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = xs.iter().map(|&x| ((x - max) * t).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `β[r][c] = softmax_r(AUC[r][c] · t_omega)` from precomputed AUCs.
pub(crate) fn reliability_from_aucs<T: Real>(aucs: &[Vec<T>], t_omega: T) -> Vec<Vec<T>> {
    let classes = aucs.first().map_or(0, Vec::len);
    let mut beta = vec![vec![T::zero(); classes]; aucs.len()];
    for c in 0..classes {
        let col: Vec<T> = aucs.iter().map(|row| row[c]).collect();
        for (r, b) in softmax_scaled(&col, t_omega).into_iter().enumerate() {
            beta[r][c] = b;
        }
    }
    beta
}

/// Teacher reliability per class from one-vs-rest AUC on `valset`.
pub fn class_reliability<T: Real>(
    models: &[ModelParams<T>],
    valset: &Dataset<T>,
    t_omega: T,
) -> Result<ReliabilityMatrix<T>> {
    if models.is_empty() {
        return Err(Error::invalid("need at least one teacher"));
    }
    if t_omega < T::zero() || !t_omega.is_finite() {
        return Err(Error::invalid("t_omega must be finite and non-negative"));
    }
    let aucs = models.iter().map(|m| class_aucs(m, valset)).collect::<Result<Vec<_>>>()?;
    Ok(ReliabilityMatrix { beta: reliability_from_aucs(&aucs, t_omega), beta_old: None, t_omega })
}

/// `β_old[c] = e^{a_old T} / (e^{a_new T} + e^{a_old T})` per class.
pub fn old_model_reliability<T: Real>(
    old: &ModelParams<T>,
    new: &ModelParams<T>,
    valset: &Dataset<T>,
    t_omega: T,
) -> Result<Vec<T>> {
    let a_old = class_aucs(old, valset)?;
    let a_new = class_aucs(new, valset)?;
    Ok(old_from_aucs(&a_old, &a_new, t_omega))
}

pub(crate) fn old_from_aucs<T: Real>(a_old: &[T], a_new: &[T], t_omega: T) -> Vec<T> {
    a_old
        .iter()
        .zip(a_new)
        .map(|(&o, &n)| T::one() / (T::one() + ((n - o) * t_omega).exp()))
        .collect()
}
