use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("exact moment unsupported: {0}")]
    UnsupportedExactMoment(String),

    #[error("moment of order {p} does not exist for student_t with {dof} degrees of freedom")]
    MomentDoesNotExist { p: f64, dof: f64 },

    #[error("distribution is not sub-Gaussian: {0}")]
    NotSubGaussian(String),

    #[error("random variable is not in the Orlicz space")]
    NotInOrliczSpace,

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
