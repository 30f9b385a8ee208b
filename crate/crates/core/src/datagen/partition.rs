use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{Dataset, Shard};
use crate::{Error, Real, Result};

/// How a dataset is split into regions, clients and the server pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionPlan {
    /// Dirichlet concentration; smaller is more heterogeneous.
    pub alpha: f64,
    pub regions: usize,
    pub clients_per_region: usize,
    pub server_fraction: f64,
    pub seed: u64,
}

impl PartitionPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.server_fraction) {
            return Err(Error::invalid(format!(
                "server_fraction must lie in [0, 1), got {}",
                self.server_fraction
            )));
        }
        if self.regions == 0 || self.clients_per_region == 0 {
            return Err(Error::invalid("need at least one region and one client per region"));
        }
        Ok(())
    }

    pub fn client_count(&self) -> usize {
        self.regions * self.clients_per_region
    }
}

/// Output of [`dirichlet_partition`]: `regions[r][k]` is client `k` of region `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    pub regions: Vec<Vec<Shard<T>>>,
    pub server_pool: Shard<T>,
}

/// One draw from `Dirichlet(alpha, ..., alpha)` of dimension `k`, built from
/// normalized Gamma variates. If every variate underflows to zero (tiny
/// alpha) the whole mass goes to one uniformly chosen coordinate.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() || alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::invalid("dirichlet concentrations must be positive"));
    }
    let mut draws = Vec::with_capacity(alpha.len());
    for &a in alpha {
        let g = Gamma::new(a, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
        draws.push(g.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        Ok(draws.into_iter().map(|g| g / total).collect())
    } else {
        let mut out = vec![0.0; alpha.len()];
        out[rng.random_range(0..alpha.len())] = 1.0;
        Ok(out)
    }
}

/// Splits `ds` into a uniformly drawn server pool and per-client shards.
///
/// For each class the remaining samples are divided across all clients with
/// proportions drawn from a symmetric Dirichlet. Rounding leftovers go one at
/// a time to the client currently holding the fewest samples (lowest id on
/// ties). Client ids are region-major.
pub fn dirichlet_partition<T: Real>(ds: &Dataset<T>, plan: &PartitionPlan) -> Result<Partition<T>> {
    plan.validate()?;
    if ds.is_empty() {
        return Err(Error::invalid("cannot partition an empty dataset"));
    }
    let n_clients = plan.client_count();
    let mut rng = crate::rng::substream(plan.seed, "partition");

    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);
    let n_server = (plan.server_fraction * ds.len() as f64).round() as usize;
    let (server_idx, rest) = order.split_at(n_server);
    if rest.len() < n_clients {
        return Err(Error::InfeasiblePartition(format!(
            "{} samples left for {n_clients} clients",
            rest.len()
        )));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    let mut rest = rest.to_vec();
    rest.sort_unstable();
    for i in rest {
        by_class[ds.labels()[i]].push(i);
    }

    let alpha = vec![plan.alpha; n_clients];
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    for members in by_class.iter_mut() {
        if members.is_empty() {
            continue;
        }
        let props = sample_dirichlet(&alpha, &mut rng)?;
        members.shuffle(&mut rng);
        let n_c = members.len();
        let mut counts: Vec<usize> = props.iter().map(|p| (p * n_c as f64).floor() as usize).collect();
        let mut leftover = n_c - counts.iter().sum::<usize>();
        while leftover > 0 {
            let target = (0..n_clients)
                .min_by_key(|&k| (assigned[k].len() + counts[k], k))
                .expect("at least one client");
            counts[target] += 1;
            leftover -= 1;
        }
        let mut start = 0;
        for (k, &cnt) in counts.iter().enumerate() {
            assigned[k].extend_from_slice(&members[start..start + cnt]);
            start += cnt;
        }
    }

    if let Some(empty) = assigned.iter().position(Vec::is_empty) {
        return Err(Error::InfeasiblePartition(format!("client {empty} would receive no samples")));
    }

    let mut clients = assigned.into_iter().map(|idx| Shard::from_indices(ds, idx));
    let regions = (0..plan.regions)
        .map(|_| clients.by_ref().take(plan.clients_per_region).collect())
        .collect();
    Ok(Partition { regions, server_pool: Shard::from_indices(ds, server_idx.to_vec()) })
}
