use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vector norm {norm:e} is too small to normalize")]
    DegenerateVector { norm: f64 },

    #[error("concentration must be nonnegative, got {0}")]
    NegativeConcentration(f64),

    #[error("circular mean is undefined (resultant length {0:e})")]
    UndefinedMean(f64),

    #[error("mean resultant length {0} outside [0, 1)")]
    ResultantOutOfRange(f64),

    #[error("input is empty")]
    EmptyInput,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid mixture weights: {0}")]
    InvalidWeights(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("unsupported model format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("corrupt model file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },

    #[error("malformed dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
