//! Small dense networks with batched reverse-mode gradients, sinusoidal
//! encodings and the Adam optimizer. All arithmetic is `f64`.

mod adam;
mod encoding;
mod gemm;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use encoding::SineCosineEncoding;
pub use gemm::gemm;
pub use mlp::{sigmoid, Activation, Mlp, MlpSpec, Tape};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite gradient at parameter {index}; step skipped")]
    NonFiniteGradient { index: usize },
    #[error("invalid network: {0}")]
    InvalidSpec(String),
}
