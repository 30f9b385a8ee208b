use rand::Rng;

use super::prob::{argmax, softmax_into};
use super::tensor::Tensor2;
use crate::{Error, Real, Result};

/// Parameters of a fully connected network stored as one flat vector.
///
/// Layer `k` with shape `(in, out)` occupies `in * out` weights laid out as
/// `w[i * out + o]`, followed by `out` biases. Hidden layers use ReLU; the
/// last layer is linear and produces class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    layer_shapes: Vec<(usize, usize)>,
    values: Vec<T>,
    seed: u64,
}

fn param_count(shapes: &[(usize, usize)]) -> usize {
    shapes.iter().map(|&(i, o)| i * o + o).sum()
}

impl<T: Real> ModelParams<T> {
    pub fn new(layer_shapes: Vec<(usize, usize)>, values: Vec<T>, seed: u64) -> Result<Self> {
        if layer_shapes.is_empty() {
            return Err(Error::invalid("model needs at least one layer"));
        }
        if layer_shapes.windows(2).any(|w| w[0].1 != w[1].0) {
            return Err(Error::invalid("consecutive layer shapes do not chain"));
        }
        let expected = param_count(&layer_shapes);
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} parameters, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(Self { layer_shapes, values, seed })
    }

    pub fn zeros(layer_shapes: Vec<(usize, usize)>) -> Result<Self> {
        let n = param_count(&layer_shapes);
        Self::new(layer_shapes, vec![T::zero(); n], 0)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_shapes: Vec<(usize, usize)>, seed: u64) -> Result<Self> {
        let mut rng = crate::rng::seeded(seed);
        let mut values = Vec::with_capacity(param_count(&layer_shapes));
        for &(fan_in, fan_out) in &layer_shapes {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| T::lit(rng.random_range(-bound..bound))));
            values.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        Self::new(layer_shapes, values, seed)
    }

    /// `input -> hidden (ReLU) -> classes`.
    pub fn mlp(input: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        Self::init(vec![(input, hidden), (hidden, classes)], seed)
    }

    pub fn layer_shapes(&self) -> &[(usize, usize)] {
        &self.layer_shapes
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layer_shapes[0].0
    }

    pub fn num_classes(&self) -> usize {
        self.layer_shapes[self.layer_shapes.len() - 1].1
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layer_shapes == other.layer_shapes
    }

    /// Same architecture and seed with new parameter values.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(self.layer_shapes.clone(), values, self.seed)
    }

    fn check_batch(&self, batch: &Tensor2<T>) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "batch has {} columns, model expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Logits for every row of `batch`.
    pub fn forward(&self, batch: &Tensor2<T>) -> Result<Tensor2<T>> {
        self.check_batch(batch)?;
        let mut acts = self.activations(batch);
        Ok(acts.pop().expect("at least one layer"))
    }

    /// Class probabilities at temperature `t`, one row per sample.
    pub fn probabilities(&self, batch: &Tensor2<T>, t: T) -> Result<Tensor2<T>> {
        if !(t > T::zero()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        let mut logits = self.forward(batch)?;
        let c = logits.cols();
        let mut buf = vec![T::zero(); c];
        for r in 0..logits.rows() {
            let row = logits.row_mut(r);
            softmax_into(row, t, &mut buf);
            row.copy_from_slice(&buf);
        }
        Ok(logits)
    }

    // Input followed by each layer's output; hidden outputs are post-ReLU.
    fn activations(&self, batch: &Tensor2<T>) -> Vec<Tensor2<T>> {
        let n = batch.rows();
        let mut acts = Vec::with_capacity(self.layer_shapes.len());
        let mut offset = 0;
        let last = self.layer_shapes.len() - 1;
        for (k, &(fan_in, fan_out)) in self.layer_shapes.iter().enumerate() {
            let w = &self.values[offset..offset + fan_in * fan_out];
            let b = &self.values[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let input = if k == 0 { batch } else { &acts[k - 1] };
            let mut out = vec![T::zero(); n * fan_out];
            for r in 0..n {
                let o_row = &mut out[r * fan_out..(r + 1) * fan_out];
                o_row.copy_from_slice(b);
                for (i, &x) in input.row(r).iter().enumerate() {
                    if x.is_zero() {
                        continue;
                    }
                    let w_row = &w[i * fan_out..(i + 1) * fan_out];
                    for (o, &wv) in o_row.iter_mut().zip(w_row) {
                        *o += x * wv;
                    }
                }
                if k != last {
                    for o in o_row.iter_mut() {
                        *o = o.max(T::zero());
                    }
                }
            }
            acts.push(Tensor2::from_parts_unchecked(n, fan_out, out));
        }
        acts
    }

    /// Logits together with the gradient of `Σ_rows <dlogits_fn(row), logits>`
    /// with respect to the parameters.
    ///
    /// `dlogits` receives the row index and that row's logits and must write
    /// dL/dz for the row; the returned gradient sums over rows.
    pub fn backprop<F>(&self, batch: &Tensor2<T>, mut dlogits: F) -> Result<Vec<T>>
    where
        F: FnMut(usize, &[T], &mut [T]),
    {
        self.check_batch(batch)?;
        let n = batch.rows();
        let acts = self.activations(batch);
        let mut grad = vec![T::zero(); self.values.len()];

        let c = self.num_classes();
        let logits = acts.last().expect("at least one layer");
        let mut delta = vec![T::zero(); n * c];
        for r in 0..n {
            dlogits(r, logits.row(r), &mut delta[r * c..(r + 1) * c]);
        }

        let mut offsets = Vec::with_capacity(self.layer_shapes.len());
        let mut off = 0;
        for &(i, o) in &self.layer_shapes {
            offsets.push(off);
            off += i * o + o;
        }

        for k in (0..self.layer_shapes.len()).rev() {
            let (fan_in, fan_out) = self.layer_shapes[k];
            let base = offsets[k];
            let input = if k == 0 { batch } else { &acts[k - 1] };
            {
                let (gw, gb) = grad[base..base + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for r in 0..n {
                    let d_row = &delta[r * fan_out..(r + 1) * fan_out];
                    for (g, &d) in gb.iter_mut().zip(d_row) {
                        *g += d;
                    }
                    for (i, &x) in input.row(r).iter().enumerate() {
                        if x.is_zero() {
                            continue;
                        }
                        for (g, &d) in gw[i * fan_out..(i + 1) * fan_out].iter_mut().zip(d_row) {
                            *g += x * d;
                        }
                    }
                }
            }
            if k == 0 {
                break;
            }
            let w = &self.values[base..base + fan_in * fan_out];
            let mut prev = vec![T::zero(); n * fan_in];
            for r in 0..n {
                let d_row = &delta[r * fan_out..(r + 1) * fan_out];
                let a_row = input.row(r);
                for i in 0..fan_in {
                    // ReLU mask: post-activation is zero exactly where pre-activation <= 0.
                    if a_row[i] <= T::zero() {
                        continue;
                    }
                    let w_row = &w[i * fan_out..(i + 1) * fan_out];
                    let mut s = T::zero();
                    for (&wv, &d) in w_row.iter().zip(d_row) {
                        s += wv * d;
                    }
                    prev[r * fan_in + i] = s;
                }
            }
            delta = prev;
        }
        Ok(grad)
    }

    /// Mean temperature-softmax cross-entropy over the batch and its gradient.
    pub fn cross_entropy_grad(&self, batch: &Tensor2<T>, labels: &[usize], t: T) -> Result<(T, Vec<T>)> {
        if batch.rows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if labels.len() != batch.rows() {
            return Err(Error::invalid("label count does not match batch rows"));
        }
        if !(t > T::zero()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        let c = self.num_classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::invalid(format!("label {bad} out of range for {c} classes")));
        }
        let n = T::lit(batch.rows() as f64);
        let mut loss = T::zero();
        let mut grad = self.backprop(batch, |r, z, d| {
            softmax_into(z, t, d);
            let y = labels[r];
            loss -= super::prob::floored_ln(d[y]);
            d[y] -= T::one();
            for v in d.iter_mut() {
                *v /= t;
            }
        })?;
        for g in grad.iter_mut() {
            *g /= n;
        }
        Ok((loss / n, grad))
    }

    /// `self - lr * grad`.
    pub fn apply_gradient(&self, grad: &[T], lr: T) -> Result<Self> {
        if grad.len() != self.values.len() {
            return Err(Error::invalid("gradient length mismatch"));
        }
        let values = self.values.iter().zip(grad).map(|(&w, &g)| w - lr * g).collect();
        self.with_values(values)
    }

    /// One SGD step on the mean temperature cross-entropy of the batch.
    pub fn grad_step(&self, batch: &Tensor2<T>, labels: &[usize], lr: T, t: T) -> Result<Self> {
        if lr < T::zero() {
            return Err(Error::invalid("learning rate must be non-negative"));
        }
        let (_, grad) = self.cross_entropy_grad(batch, labels, t)?;
        self.apply_gradient(&grad, lr)
    }
}

/// Argmax class for every row.
pub fn predict<T: Real>(model: &ModelParams<T>, features: &Tensor2<T>) -> Result<Vec<usize>> {
    let logits = model.forward(features)?;
    Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
}

/// Top-1 accuracy; 0 for an empty set.
pub fn accuracy<T: Real>(model: &ModelParams<T>, features: &Tensor2<T>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    let pred = predict(model, features)?;
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}
