//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An edge passed to `remove_edge` is not present in the topology.
    #[error("edge ({from}, {to}) is not present in the topology")]
    MissingEdge { from: usize, to: usize },

    /// A document failed to parse; `at` names the offending line or field.
    #[error("parse error at {at}: {message}")]
    Parse { at: String, message: String },

    /// Tensor dimensions disagree; `at` names the node or layer.
    #[error("shape mismatch at {at}: {message}")]
    Shape { at: String, message: String },

    /// The API was driven out of contract (unknown format, foreign tape id, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// An evaluator failed to produce a result.
    #[error("evaluation failed: {0}")]
    Eval(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn parse(at: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse { at: at.into(), message: msg.into() }
    }

    pub fn shape(at: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Shape { at: at.into(), message: msg.into() }
    }
}
