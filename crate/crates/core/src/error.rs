use std::path::PathBuf;

use crate::net::UnitId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        layer: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("forward trace has no recorded activations")]
    MissingTrace,

    #[error("unknown prunable units: {0:?}")]
    UnknownUnits(Vec<UnitId>),

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: usize, class_count: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("unsupported layer kind for {method}: {kind}")]
    UnsupportedLayer { method: &'static str, kind: String },

    #[error("empty attribution map sequence")]
    EmptyMaps,

    #[error("attribution maps mix methods: {0} and {1}")]
    MixedMethods(String, String),

    #[error("score table does not cover units: {0:?}")]
    MissingUnits(Vec<UnitId>),

    #[error("pruning rate {0} outside [0, 1]")]
    InvalidRate(f64),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u64, expected: u64 },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}
