//! The hierarchical training loop: regional FedAvg rounds, an ε-gated global
//! step every episode, mid-run region injection and per-round metrics.

mod config;
mod sim;

pub use config::{AggregationMode, DataSource, Injection, PartitionConfig, RunConfig};
pub use sim::{
    beta_spread, distill_episode, global_step, prepare, read_summary_csv, run, run_prepared, train_episode,
    AccessAudit, Aggregator, DistillReport, Episode, GlobalStepOutcome, RunData, RunLog, RunOutcome, RunRecord,
    SummaryRow,
};
