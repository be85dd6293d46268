//! Loss terms, the mesh-prior schedule, view augmentation, the training
//! loop and evaluation metrics.

mod config;
mod dataset;
mod losses;
mod metrics;
mod objective;
mod train;

pub use config::{scaled_cutoff, LossWeights, Profile, TrainConfig};
pub use dataset::{CaptureDataset, CaptureFrame};
pub use losses::{
    augment_view, backproject, color_loss, depth_loss, eikonal_loss, geometric_error, mesh_loss, mesh_samples,
    near_surface, uniform_ball, NEAR_SURFACE_SIGMA,
};
pub use metrics::{psnr, ssim, EvalReport, FrameMetrics, MeanStd, PSNR_CAP};
pub use objective::{iteration_rng, objective, BatchRecord, LossTerms, StepLoss};
pub use train::{
    eval_frame_subset, evaluate, read_trace, train_to_dir, TraceRow, Trainer, CHECKPOINT_FILE, TRACE_FILE,
    TRACE_META_FILE,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::fields::{CheckpointError, FieldError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {detail} at iteration {iteration}{}", dump_path.as_ref().map(|p| format!("; batch written to {}", p.display())).unwrap_or_default())]
    NonFinite { iteration: u64, detail: String, dump: String, dump_path: Option<PathBuf> },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl TrainError {
    fn non_finite(loss: StepLoss, record: BatchRecord, what: &str) -> Self {
        TrainError::NonFinite {
            iteration: loss.iteration,
            detail: what.to_string(),
            dump: train::dump_json(&loss, &record, what),
            dump_path: None,
        }
    }
}
