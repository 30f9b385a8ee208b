use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Shard;
use crate::numerics::ModelParams;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationWeighting {
    /// `1/N` per model.
    #[default]
    Uniform,
    /// Proportional to each client's sample count.
    SampleCount,
}

#[derive(Debug, Clone)]
pub struct ClientState<T> {
    pub id: usize,
    pub shard: Shard<T>,
    pub model: ModelParams<T>,
}

impl<T: Real> ClientState<T> {
    pub fn new(id: usize, shard: Shard<T>, model: ModelParams<T>) -> Self {
        Self { id, shard, model }
    }

    pub fn sample_count(&self) -> usize {
        self.shard.len()
    }
}

#[derive(Debug, Clone)]
pub struct RegionState<T> {
    pub id: usize,
    pub clients: Vec<ClientState<T>>,
    pub model: ModelParams<T>,
}

/// `epochs` passes of shuffled mini-batch SGD from `init` over the client's
/// shard. Shuffling draws from the stream `seed`.
pub fn local_train<T: Real>(
    client: &ClientState<T>,
    init: &ModelParams<T>,
    params: &TrainParams,
    seed: u64,
) -> Result<ModelParams<T>> {
    if client.shard.is_empty() {
        return Err(Error::invalid(format!("client {} has an empty shard", client.id)));
    }
    if params.batch_size == 0 || !(params.lr >= 0.0) {
        return Err(Error::invalid("batch_size must be positive and lr non-negative"));
    }
    let data = &client.shard.data;
    let mut rng = crate::rng::seeded(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut model = init.clone();
    let lr = T::lit(params.lr);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(params.batch_size) {
            let batch = data.features().select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            model = model.grad_step(&batch, &labels, lr, T::one())?;
        }
    }
    Ok(model)
}

/// Elementwise weighted mean of `models`.
///
/// Each coordinate's terms are summed in ascending value order, so the result
/// is bit-identical under any permutation of the inputs.
pub fn fedavg<T: Real>(models: &[ModelParams<T>], weights: Option<&[T]>) -> Result<ModelParams<T>> {
    let first = models.first().ok_or_else(|| Error::invalid("fedavg needs at least one model"))?;
    if models.iter().any(|m| !m.same_shape(first)) {
        return Err(Error::invalid("models differ in layer shapes"));
    }
    let n = models.len();
    let norm_weights: Option<Vec<T>> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::invalid("one weight per model required"));
            }
            if w.iter().any(|&x| x < T::zero() || !x.is_finite()) {
                return Err(Error::invalid("weights must be finite and non-negative"));
            }
            let total = sorted_sum(&mut w.to_vec());
            if total.is_zero() {
                return Err(Error::invalid("weights are all zero"));
            }
            Some(w.iter().map(|&x| x / total).collect())
        }
        None => None,
    };
    let mut terms = vec![T::zero(); n];
    let mut out = Vec::with_capacity(first.values().len());
    for j in 0..first.values().len() {
        match &norm_weights {
            Some(w) => {
                for ((t, m), &wi) in terms.iter_mut().zip(models).zip(w) {
                    *t = wi * m.values()[j];
                }
                out.push(sorted_sum(&mut terms));
            }
            None => {
                for (t, m) in terms.iter_mut().zip(models) {
                    *t = m.values()[j];
                }
                out.push(sorted_sum(&mut terms) / T::lit(n as f64));
            }
        }
    }
    first.with_values(out)
}

fn sorted_sum<T: Real>(terms: &mut [T]) -> T {
    terms.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite terms"));
    terms.iter().copied().sum()
}

/// `k` distinct client ids drawn uniformly without replacement, returned in
/// ascending order.
pub fn sample_clients<T: Real>(region: &RegionState<T>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = region.clients.len();
    if k > n {
        return Err(Error::invalid(format!("cannot sample {k} of {n} clients")));
    }
    let mut rng = crate::rng::seeded(seed);
    let mut ids: Vec<usize> = index::sample(&mut rng, n, k).into_iter().map(|i| region.clients[i].id).collect();
    ids.sort_unstable();
    Ok(ids)
}

/// One communication round inside a region: the selected clients train from
/// the regional model in parallel, then FedAvg replaces the regional model.
///
/// `client_seed(id)` supplies each client's shuffling stream.
pub fn regional_round<T: Real, F>(
    region: &mut RegionState<T>,
    selected: &[usize],
    params: &TrainParams,
    weighting: AggregationWeighting,
    client_seed: F,
) -> Result<()>
where
    F: Fn(usize) -> u64 + Sync,
{
    let init = region.model.clone();
    let mut chosen: Vec<&mut ClientState<T>> =
        region.clients.iter_mut().filter(|c| selected.contains(&c.id)).collect();
    if chosen.is_empty() {
        return Err(Error::invalid(format!("no clients selected in region {}", region.id)));
    }
    chosen.sort_by_key(|c| c.id);
    chosen.par_iter_mut().try_for_each(|c| -> Result<()> {
        c.model = local_train(c, &init, params, client_seed(c.id))?;
        Ok(())
    })?;
    let models: Vec<ModelParams<T>> = chosen.iter().map(|c| c.model.clone()).collect();
    let weights: Option<Vec<T>> = match weighting {
        AggregationWeighting::Uniform => None,
        AggregationWeighting::SampleCount => Some(chosen.iter().map(|c| T::lit(c.sample_count() as f64)).collect()),
    };
    region.model = fedavg(&models, weights.as_deref())?;
    Ok(())
}
