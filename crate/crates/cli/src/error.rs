use duostore_core::CoreError;
use duostore_dispatch::DispatchError;
use duostore_search::SearchError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Search(#[from] SearchError),
    /// A stage was asked for before the result it builds on exists.
    #[error("sequencing error: {0}")]
    Sequencing(String),
    #[error("no feasible plan: {0}")]
    Infeasible(String),
    /// Re-solving the chosen plan did not reproduce its dispatch.
    #[error("re-validation failed: {0}")]
    Revalidation(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {path}: {message}")]
    Format { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 for bad input, 3 for infeasible, 4 when the
    /// solver budget ran out without an incumbent.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Core(_) | CliError::Sequencing(_) | CliError::Format { .. } => 2,
            CliError::Infeasible(_) => 3,
            CliError::Dispatch(e) | CliError::Search(SearchError::Dispatch(e)) => dispatch_code(e),
            CliError::Search(SearchError::Baseline { source, .. }) => dispatch_code(source),
            CliError::Search(SearchError::Core(_) | SearchError::Config(_)) => 2,
            _ => 1,
        }
    }
}

fn dispatch_code(e: &DispatchError) -> i32 {
    match e {
        DispatchError::Infeasible { .. } => 3,
        DispatchError::NoSolution { .. } => 4,
        DispatchError::Core(_) | DispatchError::UnknownNode(_) | DispatchError::InfeasibleBounds(_) => 2,
        DispatchError::Conic(_) => 1,
    }
}
