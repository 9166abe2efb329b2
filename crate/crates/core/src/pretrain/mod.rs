//! Pretraining loop and checkpoints.

mod checkpoint;
mod config;
mod engine;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, load_params_into, read_index, save_checkpoint, Checkpoint, CheckpointIndex, MomentEntry,
    ParamEntry, INDEX_FILE,
};
pub use config::{config_digest, PretrainConfig};
pub use engine::{
    channel_stats, epoch_means, loss_csv, pretrain_run, steps_per_epoch, write_epoch_csv, write_loss_csv, Batch, PretrainOutput,
    Trainer,
};

/// One logged optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}
