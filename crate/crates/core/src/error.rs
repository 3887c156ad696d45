use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("loss is not connected to any differentiable leaf")]
    Detached,

    #[error("projection domain: {0}")]
    Projection(String),

    #[error("root depth refinement failed: {0}")]
    Refinement(String),

    #[error("degenerate alignment: {0}")]
    Alignment(String),

    #[error("sequence too short: need {needed} frames, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
