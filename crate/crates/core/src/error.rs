use thiserror::Error;

/// Errors produced by the simulation, statistics and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is outside its allowed domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested instance exceeds a hard engine limit.
    #[error("engine limit exceeded: {0}")]
    EngineLimit(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Collapsing onto an outcome whose probability is numerically zero.
    #[error("outcome {outcome} has probability {probability:e}, below the collapse threshold")]
    DegenerateOutcome { outcome: u8, probability: f64 },

    #[error("adaptive quadrature did not converge: estimated error {error_estimate:e} after {intervals} subintervals")]
    QuadratureNonConvergence { error_estimate: f64, intervals: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    /// Malformed external data; `line` is 1-based.
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
