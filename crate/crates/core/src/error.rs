use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// One or more parameter invariants failed; every violation is listed.
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("torus of size {size} cannot hold a covariance of radius {d} (need size > 2d)")]
    TorusTooSmall { size: usize, d: usize },

    #[error("weight covariance is not a valid stationary covariance: min spectral value {min}")]
    SpectrallyInvalid { min: f64 },

    /// A covariance matrix or reduced variance is negative beyond the roundoff tolerance.
    #[error("{context}: not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { context: String, min_eig: f64 },

    #[error("missing moment entry M^{lag}_{{{r},{s}}}")]
    MissingMoment { lag: i64, r: usize, s: usize },

    #[error("monte carlo oracle needs at least 100 samples, got {0}")]
    TooFewSamples(usize),

    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::LengthMismatch { .. }
                | Error::OutOfRange(_)
                | Error::TorusTooSmall { .. }
                | Error::SpectrallyInvalid { .. }
                | Error::TooFewSamples(_)
                | Error::InvalidPlan(_)
                | Error::Shape(_)
                | Error::Format(_)
                | Error::Json(_)
        )
    }
}
