//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate feature: zero norm")]
    DegenerateFeature,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unknown task {0}")]
    UnknownTask(usize),

    #[error("unknown class {0}")]
    UnknownClass(usize),

    #[error("class {0} has no centroids")]
    EmptyClass(usize),

    #[error("no positive pairs in batch")]
    NoPositivePairs,

    #[error("anchor for class {class} is missing a prototype for class {missing}")]
    MissingPrototype { class: usize, missing: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("metric undefined: {0}")]
    MetricUndefined(&'static str),

    #[error("probe sets do not match: {0}")]
    ProbeMismatch(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {msg}")]
    Format { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
