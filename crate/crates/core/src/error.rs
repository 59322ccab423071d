use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quadrature request: {0}")]
    Quadrature(String),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate subspace: all {dim} eigenvalues below truncation threshold {threshold:e}")]
    DegenerateSubspace { dim: usize, threshold: f64 },

    #[error("degenerate subspace at step {step}: {source}")]
    TrainingSolve {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid problem parameters: {0}")]
    InvalidProblem(String),

    #[error("invalid loss configuration: {0}")]
    Loss(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
