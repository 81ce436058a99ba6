use std::path::PathBuf;

use thiserror::Error;
use vtcc_tensor::TensorError;

#[derive(Debug, Error)]
pub enum VtccError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric guard: {0}")]
    NumericGuard(String),
    #[error("non-finite loss: instance={instance} cluster={cluster}")]
    NonFiniteLoss { instance: f64, cluster: f64 },
    #[error("load error in {path}: {msg}")]
    Load { path: PathBuf, msg: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("incompatible checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("training diverged at epoch {epoch} step {step}: {detail}")]
    Diverged { epoch: usize, step: usize, detail: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl VtccError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VtccError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn load(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        VtccError::Load {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            VtccError::Tensor(_) => "tensor",
            VtccError::Config(_) => "config",
            VtccError::Contract(_) => "contract",
            VtccError::NumericGuard(_) => "numeric_guard",
            VtccError::NonFiniteLoss { .. } => "non_finite_loss",
            VtccError::Load { .. } => "load",
            VtccError::Checkpoint(_) => "checkpoint",
            VtccError::CheckpointVersion { .. } => "checkpoint_version",
            VtccError::Diverged { .. } => "diverged",
            VtccError::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = VtccError> = std::result::Result<T, E>;
