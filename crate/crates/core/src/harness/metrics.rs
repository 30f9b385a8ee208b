use std::io::Write;

use crate::datagen::Dataset;
use crate::numerics::{predict, ModelParams};
use crate::{Error, Real, Result};

/// Counts of `(true class, predicted class)` pairs; rows are true classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_predictions(labels: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if labels.len() != predicted.len() {
            return Err(Error::invalid("labels and predictions differ in length"));
        }
        let mut counts = vec![0u64; classes * classes];
        for (&y, &p) in labels.iter().zip(predicted) {
            if y >= classes || p >= classes {
                return Err(Error::invalid(format!("class index out of range ({y} or {p} >= {classes})")));
            }
            counts[y * classes + p] += 1;
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// `trace / total`; zero for an empty matrix.
    pub fn top1(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// Header `true_class,pred_0,..`, one row per true class.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["true_class".to_string()];
        header.extend((0..self.classes).map(|c| format!("pred_{c}")));
        w.write_record(&header)?;
        for c in 0..self.classes {
            let mut rec = vec![c.to_string()];
            rec.extend(self.row(c).iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn confusion_matrix<T: Real>(model: &ModelParams<T>, ds: &Dataset<T>) -> Result<ConfusionMatrix> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let predicted = predict(model, ds.features())?;
    ConfusionMatrix::from_predictions(ds.labels(), &predicted, ds.class_count())
}

/// Recall per class; `None` for classes absent from the evaluation set.
pub fn per_class_accuracy(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.classes())
        .map(|c| {
            let n: u64 = cm.row(c).iter().sum();
            (n > 0).then(|| cm.get(c, c) as f64 / n as f64)
        })
        .collect()
}
