use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::datagen::PartitionPlan;
use crate::flcore::{AggregationWeighting, TrainParams};
use crate::lkd::DistillConfig;
use crate::{Error, Result};

/// Where the training and test data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Isotropic Gaussian mixture; means, train and test draws are seeded
    /// from the run seed.
    Gmm {
        classes: usize,
        dim: usize,
        separation: f64,
        train_samples: usize,
        test_samples: usize,
    },
    /// IDX image/label files (MNIST layout). `limit` keeps the first `n`
    /// training samples.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
    },
}

/// Dirichlet split of the training data; the seed comes from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub alpha: f64,
    pub regions: usize,
    pub clients_per_region: usize,
    pub server_fraction: f64,
}

impl PartitionConfig {
    pub fn plan(&self, seed: u64) -> PartitionPlan {
        PartitionPlan {
            alpha: self.alpha,
            regions: self.regions,
            clients_per_region: self.clients_per_region,
            server_fraction: self.server_fraction,
            seed,
        }
    }
}

/// What the global server does at the end of an episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Distill when the regions' reliability spread reaches ε, else average.
    #[default]
    F2l,
    /// Always average the regional models.
    Fedavg,
}

/// A region that joins the federation at the start of `round`.
///
/// Its data is `samples` training points restricted to `classes`, held out
/// of the initial partition and split over `clients` clients with
/// Dirichlet(`alpha`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub round: usize,
    pub clients: usize,
    pub alpha: f64,
    pub classes: Vec<usize>,
    pub samples: usize,
}

fn default_hidden() -> usize {
    32
}

/// A complete experiment description, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub partition: PartitionConfig,
    pub train: TrainParams,
    /// Clients sampled per region and round; all clients when absent.
    #[serde(default)]
    pub clients_per_round: Option<usize>,
    #[serde(default)]
    pub weighting: AggregationWeighting,
    /// Width of the single hidden layer.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub rounds_per_episode: usize,
    pub total_rounds: usize,
    #[serde(default)]
    pub distill: DistillConfig,
    #[serde(default)]
    pub aggregation: AggregationMode,
    #[serde(default)]
    pub injections: Vec<Injection>,
    /// Record wall-clock time of each global step. Off by default because
    /// timings differ between otherwise identical runs.
    #[serde(default)]
    pub record_timing: bool,
    pub seed: u64,
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if let DataSource::Gmm { classes, dim, separation, train_samples, test_samples } = &self.data {
            if *classes < 2 {
                return Err(config_err("data.gmm.classes", "need at least two classes"));
            }
            if *dim == 0 {
                return Err(config_err("data.gmm.dim", "must be positive"));
            }
            if !(*separation > 0.0) || !separation.is_finite() {
                return Err(config_err("data.gmm.separation", "must be positive"));
            }
            if *train_samples == 0 || *test_samples == 0 {
                return Err(config_err("data.gmm", "train_samples and test_samples must be positive"));
            }
        }
        self.partition
            .plan(self.seed)
            .validate()
            .map_err(|e| config_err("partition", e.to_string()))?;
        if self.train.batch_size == 0 {
            return Err(config_err("train.batch_size", "must be positive"));
        }
        if !(self.train.lr >= 0.0) || !self.train.lr.is_finite() {
            return Err(config_err("train.lr", "must be finite and non-negative"));
        }
        if self.clients_per_round == Some(0) {
            return Err(config_err("clients_per_round", "must be positive"));
        }
        if self.hidden == 0 {
            return Err(config_err("hidden", "must be positive"));
        }
        if self.rounds_per_episode == 0 {
            return Err(config_err("rounds_per_episode", "must be at least 1"));
        }
        if self.total_rounds < self.rounds_per_episode {
            return Err(config_err("total_rounds", "must be at least rounds_per_episode"));
        }
        self.distill.validate().map_err(|e| config_err("distill", e.to_string()))?;
        self.distill
            .coefficients(self.partition.regions + self.injections.len())
            .map_err(|e| config_err("distill.lambdas", e.to_string()))?;
        for (k, inj) in self.injections.iter().enumerate() {
            let field = |f: &str| format!("injections[{k}].{f}");
            if inj.round < 2 || inj.round > self.total_rounds {
                return Err(config_err(&field("round"), "must lie in 2..=total_rounds"));
            }
            if inj.clients == 0 {
                return Err(config_err(&field("clients"), "must be positive"));
            }
            if !(inj.alpha > 0.0) || !inj.alpha.is_finite() {
                return Err(config_err(&field("alpha"), "must be positive"));
            }
            if inj.classes.is_empty() {
                return Err(config_err(&field("classes"), "must list at least one class"));
            }
            if inj.samples < inj.clients {
                return Err(config_err(&field("samples"), "must be at least the client count"));
            }
        }
        Ok(())
    }
}
