use std::path::PathBuf;

use ndauto::TensorError;
use thiserror::Error;
use tomo::TomoError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tomo(#[from] TomoError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("diverged at iteration {iteration}: objective {value:e} exceeds 10x the initial {initial:e}")]
    Diverged {
        iteration: usize,
        value: f64,
        initial: f64,
        trace: Vec<f64>,
    },
    #[error("dense inverse Hessian of dimension {dim} exceeds the limit {limit}; use the latent solver (method qn-mixer)")]
    MemoryGuard { dim: usize, limit: usize },
    #[error("non-finite loss at step {step}; last good checkpoint: {}", checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into()))]
    NonFiniteLoss { step: usize, checkpoint: Option<PathBuf> },
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Short stable identifier used in one-line CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Tensor(_) => "tensor",
            Error::Tomo(TomoError::Io(_)) | Error::Io(_) => "io",
            Error::Tomo(TomoError::Format(_)) => "format",
            Error::Tomo(_) => "geometry",
            Error::InvalidArgument(_) => "argument",
            Error::Shape(_) => "shape",
            Error::Diverged { .. } => "diverged",
            Error::MemoryGuard { .. } => "memory-guard",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::Config(_) => "config",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
