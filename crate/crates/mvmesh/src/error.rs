//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any mvmesh operation.
#[derive(Error, Debug)]
pub enum Error {
    /// Tensor shapes are incompatible for the attempted operation.
    #[error("shape mismatch in {op}: left {left:?} vs right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A tensor had the wrong rank or dimensions for an operation.
    #[error("invalid shape for {op}: got {shape:?}, {reason}")]
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },

    /// Invalid argument outside the tensor-shape family.
    #[error("invalid argument to {op}: {reason}")]
    BadArgument { op: &'static str, reason: String },

    /// A gradient contained NaN or infinity.
    #[error("non-finite gradient for parameter '{name}'")]
    NonFiniteGradient { name: String },

    /// A named parameter was requested but never registered.
    #[error("unknown parameter '{name}'")]
    UnknownParameter { name: String },

    /// Parameter exists but its stored shape differs from the expected one.
    #[error("parameter '{name}' has shape {got:?}, expected {expected:?}")]
    ParameterShape {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },

    /// Text or binary input failed to parse. Line is 1-based, 0 when unknown.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A binary file does not match its expected layout.
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },

    /// A geometric precondition was violated (degenerate face, empty grid...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Run configuration failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint file is structurally valid but incompatible with this build.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps an io::Error with the offending path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
