//! Datasets: synthetic Gaussian mixtures, IDX ingestion, CSV export and
//! Dirichlet non-IID partitioning.

mod dataset;
mod gmm;
mod idx;
mod partition;

pub use dataset::{Dataset, Shard};
pub use gmm::{gmm_sample, GmmSpec};
pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
pub use partition::{dirichlet_partition, sample_dirichlet, Partition, PartitionPlan};
