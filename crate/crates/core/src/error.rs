use thiserror::Error;

/// Failures raised by the estimation and identification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("covariance is not positive definite, even after jitter")]
    NotPositiveDefinite,
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("invalid magnetic field reading: corrected b_z = {0} is not positive")]
    InvalidReading(f64),
    #[error("attitude too close to horizontal thrust: cos(roll)·cos(pitch) = {0}")]
    SingularAttitude(f64),
    #[error("least-squares design is rank deficient ({0})")]
    RankDeficient(&'static str),
    #[error("no valid samples: {0}")]
    NoValidSamples(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
