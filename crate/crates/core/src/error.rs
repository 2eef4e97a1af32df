use thiserror::Error;

/// Errors raised across planning, simulation and I/O.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error("planner error: {0}")]
    Planner(String),

    #[error("trace generation error: {0}")]
    Trace(String),

    /// A command violated bank state. Always indicates a trace-generation bug.
    #[error("simulation fault at command {index}: {reason}")]
    Sim { index: usize, reason: String },

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("unknown override key `{0}`")]
    UnknownKey(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Decode(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
