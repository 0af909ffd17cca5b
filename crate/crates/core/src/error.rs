use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes incompatible with an operation. `detail` names the axes involved.
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    /// A phase of the training protocol was entered with the wrong freeze state.
    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("missing gradient for parameter {0}")]
    MissingGradient(String),

    #[error("loss diverged to {loss} during {phase} (iteration {iteration})")]
    Divergence {
        loss: f64,
        phase: &'static str,
        iteration: usize,
        trace: Box<crate::trainer::LoopTrace>,
    },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    /// Short stable identifier, used by the CLI for its machine-readable error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Config(_) => "config",
            Error::LabelOutOfRange { .. } => "label-range",
            Error::Protocol(_) => "protocol",
            Error::MissingGradient(_) => "missing-gradient",
            Error::Divergence { .. } => "divergence",
            Error::Empty(_) => "empty",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}
