//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a zero vector (norm {norm:e})")]
    ZeroVector { norm: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("anchor {anchor} has no positives under its assigned label")]
    NoPositives { anchor: usize },

    #[error("anchor {anchor} has no negatives under its assigned label")]
    NoNegatives { anchor: usize },

    #[error("empty positive set")]
    EmptyPositives,

    #[error("empty negative set")]
    EmptyNegatives,

    #[error("latent labels are required but missing")]
    MissingLatentLabels,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty or all-zero distribution")]
    EmptyDistribution,

    #[error("training split contains a single class")]
    SingleClassSplit,

    #[error("could not assemble a batch with at least two classes after {attempts} reshuffles")]
    DegenerateBatch { attempts: usize },

    #[error("loss became non-finite ({value}) at {context}")]
    NonFiniteLoss { value: f64, context: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed embedding file: {0}")]
    MalformedFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
