use duostore_conic::ConicError;
use duostore_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("storage design placed on unknown node {0}")]
    UnknownNode(u32),
    #[error("infeasible bounds: {0}")]
    InfeasibleBounds(String),
    #[error("scenario {scenario} is infeasible (suspect rows: {})", conflict.join(", "))]
    Infeasible {
        scenario: String,
        conflict: Vec<String>,
    },
    #[error("scenario {scenario}: no incumbent found ({message})")]
    NoSolution { scenario: String, message: String },
}

pub type Result<T> = std::result::Result<T, DispatchError>;
