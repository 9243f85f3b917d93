//! Dense feed-forward binary classifier trained from scratch.
//!
//! Hidden layers use the rectifier, the single output unit emits a logit.
//! Training minimizes class-weighted binary cross-entropy with AdamW, uses
//! inverted dropout on hidden activations, and stops early on validation
//! loss.

mod checkpoint;
mod loss;
mod model;
mod optim;
mod search;
mod train;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use loss::{bce_term, weighted_bce_loss, PROBABILITY_CLIP};
pub use model::{init_model, Gradients, Layer, MlpModel, Mode};
pub use optim::{adamw_update, AdamW, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use search::{random_search, SearchSpace, SearchTrial};
pub use train::{fit, logistic, predict_confidence, EarlyStopping, EpochLog, StopDecision, TrainConfig, TrainedModel, CONFIDENCE_CLIP};

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("input dimension must be at least 1")]
    ZeroDimension,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch length mismatch: {logits} logits, {labels} labels")]
    LengthMismatch { logits: usize, labels: usize },
    #[error("label must be 0 or 1, got {0}")]
    Label(u8),
    #[error("non-finite gradient in parameter block {0}")]
    NonFiniteGradient(String),
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
