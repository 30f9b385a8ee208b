//! Client training, FedAvg aggregation, client sampling and drift
//! diagnostics.

mod client;
mod diagnostics;

pub use client::{
    fedavg, local_train, regional_round, sample_clients, AggregationWeighting, ClientState, RegionState,
    TrainParams,
};
pub use diagnostics::{gradient_dissimilarity, probability_distance, weight_divergence};
