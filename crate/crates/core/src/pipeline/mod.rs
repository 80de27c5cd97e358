//! Training, inference and evaluation driver.

mod checkpoint;
mod config;
mod log;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{Preset, ShrinkMode, TrainConfig};
pub use log::{parse_log, LogRecord, LogStage, TrainingLog};
pub use train::{
    embed_all, evaluate_runs, finetune, finetune_objective, finetune_step, infer, init_model,
    pretrain, run, stage_rng, FinetuneOutcome, RngStream, RunOutcome,
};

use crate::clustering::ClusterCenters;
use crate::model::DinkModel;
use crate::numerics::AdamState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrained,
    Finetuned,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Pretrained => "pretrained",
            Stage::Finetuned => "finetuned",
        }
    }
}

/// Model parameters plus everything needed to resume or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: DinkModel,
    /// Present once fine-tuning has started.
    pub centers: Option<ClusterCenters>,
    pub stage: Stage,
    pub config: TrainConfig,
    /// Adam state of the last stage, keyed by parameter name.
    pub optimizer: Vec<(String, AdamState)>,
}
