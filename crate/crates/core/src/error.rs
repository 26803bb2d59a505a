use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("measurement area too small: {0}")]
    AreaTooSmall(String),

    #[error("UE at sample {sample} coincides with antenna {antenna} of AP {ap}")]
    DegeneratePath { sample: usize, ap: usize, antenna: usize },

    #[error("CSI tensor of sample {0} is identically zero; cannot normalize")]
    ZeroNorm(usize),

    #[error("non-finite gradient in parameter block {0}")]
    NonFiniteGradient(String),

    #[error("no anchors given: displacements alone fix positions only up to a global translation")]
    NoAnchors,

    #[error("unknown method `{0}` (expected ours, baseline1, baseline2 or baseline3)")]
    UnknownMethod(String),

    #[error("empty evaluation set")]
    EmptyTestSet,

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("missing input file {0}")]
    MissingInput(PathBuf),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }
}
