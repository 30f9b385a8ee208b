use rand::Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::numerics::Tensor2;
use crate::{Error, Real, Result};

/// Gaussian mixture with diagonal covariances, one component per class.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec<T> {
    pub means: Vec<Vec<T>>,
    pub variances: Vec<Vec<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> GmmSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let c = self.means.len();
        if c == 0 || self.variances.len() != c || self.weights.len() != c {
            return Err(Error::invalid("means, variances and weights must have one entry per class"));
        }
        let d = self.means[0].len();
        if self.means.iter().chain(&self.variances).any(|v| v.len() != d) {
            return Err(Error::invalid("inconsistent feature dimension"));
        }
        if self.variances.iter().flatten().any(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::invalid("variances must be positive"));
        }
        if self.means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::invalid("means must be finite"));
        }
        if self.weights.iter().any(|&w| w < T::zero()) {
            return Err(Error::invalid("mixture weights must be non-negative"));
        }
        let total: T = self.weights.iter().copied().sum();
        let tol = (16.0 * T::epsilon().as_f64() * c as f64).max(1e-9);
        if (total.as_f64() - 1.0).abs() > tol {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Uniform weights, unit variances and class means drawn from
    /// `N(0, separation^2 I)`.
    pub fn isotropic(classes: usize, dim: usize, separation: f64, seed: u64) -> Result<Self> {
        if classes == 0 || dim == 0 {
            return Err(Error::invalid("need at least one class and one dimension"));
        }
        let mut rng = crate::rng::substream(seed, "gmm-means");
        let means = (0..classes)
            .map(|_| {
                (0..dim)
                    .map(|_| T::lit(separation * rng.sample::<f64, _>(StandardNormal)))
                    .collect()
            })
            .collect();
        Ok(Self {
            means,
            variances: vec![vec![T::one(); dim]; classes],
            weights: vec![T::lit(1.0 / classes as f64); classes],
        })
    }
}

/// `n` i.i.d. draws: class from the mixture weights, then features from that
/// class's Gaussian.
pub fn gmm_sample<T: Real>(spec: &GmmSpec<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    spec.validate()?;
    let mut rng = crate::rng::substream(seed, "gmm-sample");
    let cdf: Vec<f64> = spec
        .weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w.as_f64();
            Some(*acc)
        })
        .collect();
    let d = spec.dim();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
        let c = cdf.iter().position(|&x| u < x).unwrap_or(cdf.len() - 1);
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            data.push(spec.means[c][j] + spec.variances[c][j].sqrt() * T::lit(z));
        }
        labels.push(c);
    }
    Dataset::new(Tensor2::new(n, d, data)?, labels, spec.classes())
}
