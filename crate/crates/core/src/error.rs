use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsupported cone: {0}")]
    UnsupportedCone(String),
    #[error("no closed-form spectral data: {0}")]
    UnsupportedSpectral(String),
    #[error("unsupported distribution: {0}")]
    UnsupportedDistribution(String),
    #[error("degenerate covariance: {0}")]
    Degenerate(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
