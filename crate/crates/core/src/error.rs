use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpetError {
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("invalid parameters: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular or not definite: {0}")]
    Singular(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("problem too large for dense analysis: {dofs} dofs (limit {limit})")]
    TooLarge { dofs: usize, limit: usize },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MpetError>;
