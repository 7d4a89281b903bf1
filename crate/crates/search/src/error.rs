use duostore_core::CoreError;
use duostore_dispatch::DispatchError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("search configuration: {0}")]
    Config(String),
    #[error("reference solve of scenario {scenario} failed: {source}")]
    Baseline {
        scenario: String,
        #[source]
        source: DispatchError,
    },
    #[error("trace output: {0}")]
    Trace(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SearchError>;
