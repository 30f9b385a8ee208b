use super::ClientState;
use crate::numerics::{ModelParams, ProbVector};
use crate::{Error, Real, Result};

/// Euclidean norm of the parameter difference.
pub fn weight_divergence<T: Real>(a: &ModelParams<T>, b: &ModelParams<T>) -> Result<T> {
    if !a.same_shape(b) {
        return Err(Error::invalid("models differ in layer shapes"));
    }
    let sq: T = a.values().iter().zip(b.values()).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(sq.sqrt())
}

/// L1 distance between a client's class frequencies and the global ones.
pub fn probability_distance<T: Real>(client: &ProbVector<T>, global: &ProbVector<T>) -> Result<T> {
    if client.len() != global.len() {
        return Err(Error::invalid("class distributions differ in length"));
    }
    Ok(client.as_slice().iter().zip(global.as_slice()).map(|(&p, &q)| (p - q).abs()).sum())
}

/// `(A, B)` with `A` the mean squared norm of the client gradients and `B`
/// the squared norm of their mean, all taken at `model` on each client's
/// full shard. `A - B >= 0` measures gradient heterogeneity.
pub fn gradient_dissimilarity<T: Real>(clients: &[ClientState<T>], model: &ModelParams<T>) -> Result<(T, T)> {
    if clients.is_empty() {
        return Err(Error::invalid("need at least one client"));
    }
    let mut mean = vec![T::zero(); model.values().len()];
    let mut a = T::zero();
    let n = T::lit(clients.len() as f64);
    for c in clients {
        let data = &c.shard.data;
        let (_, g) = model.cross_entropy_grad(data.features(), data.labels(), T::one())?;
        a += g.iter().map(|&x| x * x).sum::<T>();
        for (m, &x) in mean.iter_mut().zip(&g) {
            *m += x / n;
        }
    }
    let b = mean.iter().map(|&x| x * x).sum::<T>();
    Ok((a / n, b))
}
