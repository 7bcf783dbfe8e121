//! Orchestration around `bisst-core`: dataset and checkpoint file formats,
//! the training loop, prediction files, and evaluation reports.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod gradcheck;
pub mod report;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::FileConfig;
pub use train::{total_loss, train, EpochStats, TrainConfig, TrainOutcome};
