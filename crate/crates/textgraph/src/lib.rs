//! IO and orchestration around `textgraph-core`: the JSON-lines corpus
//! format and converter, flat key-value run configuration, checkpoints,
//! the training loop, evaluation reports, and attention artifacts.

pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod report;
pub mod runconfig;
pub mod trainer;

pub use runconfig::{RunConfig, FORMAT_VERSION};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Core(#[from] textgraph_core::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint incompatible: {0} (pass --force to override)")]
    CheckpointMismatch(String),
    #[error("corpus conversion failed: {0}")]
    Convert(String),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Stable machine-readable kind tag for the CLI error object.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(core) => match core {
                textgraph_core::Error::Validation(_) => "validation",
                textgraph_core::Error::Config(_) => "config",
                textgraph_core::Error::Dimension(_) => "dimension",
                textgraph_core::Error::UnknownLabel(_) => "unknown-label",
                textgraph_core::Error::PoolTooSmall { .. } => "pool-too-small",
                textgraph_core::Error::NonFinite(_) => "non-finite",
                textgraph_core::Error::SentenceTooLong { .. } => "sentence-too-long",
                textgraph_core::Error::AdapterUnavailable => "adapter-unavailable",
                textgraph_core::Error::Unsupported(_) => "unsupported",
            },
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::CheckpointMismatch(_) => "checkpoint-mismatch",
            Error::Convert(_) => "convert",
            Error::Other(_) => "other",
        }
    }
}
