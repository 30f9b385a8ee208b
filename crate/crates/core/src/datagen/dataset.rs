use std::io::Write;

use crate::numerics::Tensor2;
use crate::{Error, Real, Result};

/// Feature rows with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Tensor2<T>,
    labels: Vec<usize>,
    class_count: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(features: Tensor2<T>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::invalid(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::invalid(format!("label {bad} >= class count {class_count}")));
        }
        Ok(Self { features, labels, class_count })
    }

    pub fn empty(dim: usize, class_count: usize) -> Self {
        Self { features: Tensor2::zeros(0, dim), labels: Vec::new(), class_count }
    }

    pub fn features(&self) -> &Tensor2<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Empirical class frequencies; all zero for an empty set.
    pub fn class_distribution(&self) -> Vec<T> {
        let n = self.len().max(1) as f64;
        self.class_counts().into_iter().map(|k| T::lit(k as f64 / n)).collect()
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() || self.class_count != other.class_count {
            return Err(Error::invalid("datasets differ in dimension or class count"));
        }
        let mut data = self.features.data().to_vec();
        data.extend_from_slice(other.features.data());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(Tensor2::new(self.len() + other.len(), self.dim(), data)?, labels, self.class_count)
    }

    /// CSV with header `feature_0..feature_{d-1},label`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("feature_{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for r in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(r).iter().map(|v| v.as_f64().to_string()).collect();
            rec.push(self.labels[r].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A slice of a parent dataset held by one client (or by the server).
#[derive(Debug, Clone, PartialEq)]
pub struct Shard<T> {
    /// Row indices into the parent dataset, ascending.
    pub indices: Vec<usize>,
    pub data: Dataset<T>,
}

impl<T: Real> Shard<T> {
    pub fn from_indices(parent: &Dataset<T>, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        let data = parent.subset(&indices);
        Self { indices, data }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}
