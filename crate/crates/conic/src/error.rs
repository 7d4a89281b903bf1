use thiserror::Error;

pub type Result<T> = std::result::Result<T, ConicError>;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("{owner} references undeclared variable #{index}")]
    UnknownVar { owner: String, index: usize },

    #[error("variable {name} has invalid bounds [{lb}, {ub}]")]
    BadBounds { name: String, lb: f64, ub: f64 },

    #[error("non-finite coefficient in {0}")]
    NonFinite(String),

    #[error("backend failure: {0}")]
    Backend(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
