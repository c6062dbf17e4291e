use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("instance has no active interpretable features")]
    DegenerateInstance,

    #[error("cosine distance is undefined between two zero vectors")]
    UndefinedDistance,

    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("cannot stratify: {0}")]
    Stratification(String),

    #[error("synthetic token `{0}` already occurs in the corpus")]
    Collision(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training data contains a single class")]
    DegenerateLabels,

    #[error("no usable features remain for training")]
    DegenerateFeatures,

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("need more than {k} samples to select {k} features, got {n}")]
    InsufficientSamples { n: usize, k: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("problem too large for enumeration: n = {n} exceeds {max}")]
    Size { n: usize, max: usize },

    #[error("no classifier pair satisfied the gap thresholds after {attempts} training attempts")]
    PairSearchTimeout { attempts: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
