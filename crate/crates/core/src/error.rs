use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("layer {layer} ({kind}): {msg}")]
    Layer {
        layer: usize,
        kind: String,
        msg: String,
    },

    #[error("non-finite activation at layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("invalid neuron: {0}")]
    InvalidNeuron(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error("checkpoint manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("dataset error: {0}")]
    Data(String),

    #[error("unknown {what}: {name}")]
    Unknown { what: &'static str, name: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
