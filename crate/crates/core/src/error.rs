use thiserror::Error;

/// Errors produced by the estimation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported generator `{0}` (expected one of kl, reverse_kl, total_variation, squared_hellinger, pearson_chi2)")]
    UnsupportedGenerator(String),

    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("quadrature did not reach the requested accuracy: best estimate {value} with error estimate {abs_error}")]
    AccuracyNotReached { value: f64, abs_error: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numeric failure at iteration {iteration}: {message}")]
    NumericFailure { iteration: usize, message: String },

    #[error("infeasible norm constraint: requested radius {radius}, minimal attainable MMD {min_mmd}")]
    Infeasible { radius: f64, min_mmd: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("boundary point: {0}")]
    Boundary(String),

    #[error("certification failure: {0}")]
    Certification(String),

    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
