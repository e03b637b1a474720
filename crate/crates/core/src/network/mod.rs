//! Framework-free numeric references for the detector head: position-sensitive
//! RoI pooling, score voting, the multi-task loss and the offset recurrence.
//!
//! These are forward-only and meant for shape and invariant checks, not training.

mod loss;
mod psroi;
mod tloc;
mod weights;

use thiserror::Error;

pub use loss::{loc_loss, loc_loss_grad, multitask_loss, multitask_loss_grad, LocLossKind, LossBatch, LossConfig, LossGrad};
pub use psroi::{bin_ranges, psroi_pool, vote, Roi, ScoreMapStack, Vote};
pub use tloc::{tloc_forward, BlstmWeights, LstmParams, DEFAULT_HIDDEN};
pub use weights::{load_blstm_weights, save_blstm_weights, TensorShape, WeightManifest};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid region of interest: {0}")]
    InvalidRoi(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("weight file: {0}")]
    WeightFile(String),
}
