//! Losses, Adam optimization, the two-stage training protocol, multi-task
//! batch mixing, and few-shot adaptation.

mod adam;
mod loss;
mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use loss::{median_sigma, mmd_loss_value, nrmse_node, reference_features, target_norm};
pub use train::{
    fewshot_adapt, load_checkpoint, save_checkpoint, stage1_train, stage2_train, Checkpoint,
    EpochRow, FamilyTrainSet, Stage, TrainData, TrainReport,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("training aborted: {0}")]
    Numerical(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] crate::upsnet::Error),
    #[error(transparent)]
    Grad(#[from] crate::gradkit::Error),
    #[error(transparent)]
    Unirep(#[from] crate::unirep::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median pairwise distance of the joined sets, per step.
    Median,
    Fixed(f64),
}

/// Training hyperparameters; defaults follow the training recipe
/// (constant Adam at 5e-5, decoupled weight decay 1e-5, batch 32,
/// clipping disabled, stage 1 for 20 epochs).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Negative disables clipping.
    pub grad_clip: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub fewshot_lr: f64,
    pub fewshot_epochs: usize,
    pub seed: u64,
    pub mmd_bandwidth: Bandwidth,
    pub align_weight: f64,
    pub task_weight: f64,
    /// Reference lines drawn per step for the alignment loss.
    pub reference_subsample: usize,
    /// Cap on test pairs per family scored each epoch (0 = all).
    pub eval_pairs_per_family: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr: 5e-5,
            weight_decay: 1e-5,
            grad_clip: -1.0,
            stage1_epochs: 20,
            stage2_epochs: 40,
            fewshot_lr: 1e-5,
            fewshot_epochs: 10,
            seed: 0,
            mmd_bandwidth: Bandwidth::Median,
            align_weight: 1.0,
            task_weight: 1.0,
            reference_subsample: 256,
            eval_pairs_per_family: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.fewshot_lr <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}
