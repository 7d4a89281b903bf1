use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("topology error: {message} (cycle: {cycle:?})")]
    Topology { message: String, cycle: Vec<u32> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown node {0}")]
    UnknownNode(u32),

    #[error("degenerate device: {0}")]
    DegenerateDevice(String),

    #[error("missing baseline: {0}")]
    MissingBaseline(String),
}

impl CoreError {
    pub(crate) fn parse(context: impl Into<String>, message: impl std::fmt::Display) -> Self {
        CoreError::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
