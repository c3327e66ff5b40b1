use thiserror::Error;

/// Errors produced by grid construction, transforms and pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at masked node {node}")]
    NonFinite { node: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty vertex set")]
    EmptyVertexSet,

    #[error("singular point: zero gradient")]
    SingularPoint,

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad file format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
