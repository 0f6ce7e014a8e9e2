//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Input data failed an invariant (bad span bounds, dangling relation, ...).
    Validation(String),
    /// A configuration value is out of its allowed range or inconsistent.
    Config(String),
    /// Matrix or vocabulary width did not match what the operation expected.
    Dimension(String),
    /// A label was seen that the run's schema does not contain.
    UnknownLabel(String),
    /// Identifier pool has fewer rows than the graph has nodes.
    PoolTooSmall { pool: usize, nodes: usize },
    /// A forward pass produced a NaN or infinity.
    NonFinite(String),
    /// Sentence exceeds the configured token cap.
    SentenceTooLong { len: usize, cap: usize },
    /// The configured adapter backbone has no registered provider.
    AdapterUnavailable,
    /// Operation not defined for the active backend (e.g. attention maps
    /// from a message-passing backend).
    Unsupported(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::UnknownLabel(label) => {
                write!(f, "label `{label}` is not in the schema built from the training split")
            }
            Error::PoolTooSmall { pool, nodes } => write!(
                f,
                "identifier pool has {pool} rows but the graph has {nodes} nodes"
            ),
            Error::NonFinite(what) => write!(f, "non-finite values in {what}"),
            Error::SentenceTooLong { len, cap } => {
                write!(f, "sentence has {len} tokens, exceeding the cap of {cap}")
            }
            Error::AdapterUnavailable => write!(
                f,
                "no contextual-embedding provider is registered; set encoder.backbone=toy"
            ),
            Error::Unsupported(msg) => write!(f, "unsupported operation: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
