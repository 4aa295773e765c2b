use thiserror::Error;

use crate::diffgraph::GraphError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("invalid parameters: {0}")]
    InvalidSpec(String),
    #[error("singular matrix in layer {layer} (condition number {condition:e})")]
    Singular { layer: usize, condition: f64 },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("eigengap target not reached after {tries} perturbations")]
    EigengapNotReached { tries: usize },
    #[error("latent estimate lies outside the truncation ball (norm {norm}, radius {radius})")]
    OutsideLatentDomain { norm: f64, radius: f64 },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConstraintViolation(_) => 2,
            Error::NonFinite(_) => 3,
            Error::Graph(GraphError::NonFinite { .. }) => 3,
            _ => 1,
        }
    }
}
