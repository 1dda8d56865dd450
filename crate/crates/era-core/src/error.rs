use thiserror::Error;

/// Errors produced by the identification pipeline.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Input contained NaN/Inf or was otherwise malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Shapes of the operands do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A configuration value is out of its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A dense code path was asked to materialize something above its cap.
    #[error("dense size cap exceeded: {0}")]
    SizeCap(String),

    /// A kernel failed to converge or produced unusable output.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
