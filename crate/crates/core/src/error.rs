use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions {width}x{height}: {reason}")]
    Dimension {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("intensity {value} at index {index} is outside [1/255, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("intensity {value} at index {index} is not positive")]
    Domain { index: usize, value: f64 },

    #[error("kernel on a {width}x{height} image is degenerate: {reason}")]
    DegenerateKernel {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("non-finite value at iteration {iteration}")]
    NumericalFailure { iteration: usize },

    #[error("iterate left [1/255, 1] at iteration {iteration} (value {value}); enable clamping or satisfy the range-invariance condition")]
    RangeViolation { iteration: usize, value: f64 },

    #[error("least-squares fit is rank deficient (condition number {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image data: {0}")]
    Format(String),

    #[error("truncated image data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unsupported bit depth: maxval {0} (only 255 is supported)")]
    UnsupportedDepth(u32),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
