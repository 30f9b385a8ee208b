//! Evaluation metrics, output files and the command-line interface.

mod cli;
mod metrics;
mod output;

pub use cli::{exit_code, load_config, run_cli};
pub use metrics::{confusion_matrix, per_class_accuracy, ConfusionMatrix};
pub use output::write_atomic;
