//! Files, manifests, the procedural capture scene and the command line.

mod commands;
mod io;
mod manifest;
pub mod synthetic;

pub use commands::*;
pub use io::*;
pub use manifest::*;

use thiserror::Error;

use crate::fields::CheckpointError;
use crate::spectral::SpectralError;
use crate::trainer::TrainError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

impl PipelineError {
    /// Process exit status: 3 for numeric failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Train(TrainError::NonFinite { .. }) => 3,
            _ => 2,
        }
    }
}
