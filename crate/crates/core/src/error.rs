use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor shape {shape:?} holds {expected} values but {actual} were supplied")]
    TensorSize {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("layer {layer}: {message}")]
    LayerShape { layer: usize, message: String },

    #[error("input shape {actual:?} does not match network input shape {expected:?}")]
    InputShape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset is malformed: {0}")]
    InvalidDataset(String),

    #[error("trace does not belong to this network: {0}")]
    TraceMismatch(String),

    #[error(
        "layer {layer}, neuron {neuron}: zero denominator with nonzero relevance and no stabilizer"
    )]
    ZeroDenominator { layer: usize, neuron: usize },

    #[error("invalid LRP configuration: {0}")]
    InvalidRules(String),

    #[error("fraction {0} is outside (0, 1]")]
    InvalidFraction(f64),

    #[error("bit index {0} is outside [0, 31]")]
    BitIndex(u32),

    #[error("bit error rate {0} is outside [0, 1]")]
    InvalidBer(f64),

    #[error(
        "xai targeting requires weight scores covering all {expected} weights (got {actual:?})"
    )]
    MissingScores {
        expected: usize,
        actual: Option<usize>,
    },

    #[error("weight index {index} out of range for {nt} weights")]
    WeightIndex { index: usize, nt: usize },

    #[error("duplicate weight index {0} in protection set")]
    DuplicateIndex(usize),

    #[error("invalid fault plan: {0}")]
    InvalidPlan(String),

    #[error("replica {replica} named for unprotected weight {weight_index}")]
    UnprotectedReplica {
        weight_index: usize,
        replica: &'static str,
    },

    #[error("model hash mismatch: manifest declares {declared}, weights hash to {actual}")]
    HashMismatch { declared: String, actual: String },

    #[error("shape inconsistency: {0}")]
    ShapeInconsistency(String),

    #[error("truncated data: {0}")]
    Truncated(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid campaign configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
