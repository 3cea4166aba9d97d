use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("unsupported dimension {0} (quadrature supports n = 1, 2, 3)")]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel validation failed: {reason} at direction {direction:?}")]
    KernelValidation { reason: String, direction: Vec<f64> },

    #[error("invalid quadrature config: {0}")]
    InvalidConfig(String),

    #[error("field evaluation outside domain of validity at {0:?}")]
    Domain(Vec<f64>),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("negative sample u = {value} at {point:?}")]
    NegativeSample { value: f64, point: Vec<f64> },

    #[error("accuracy not reached: best value {best}, achieved error estimate {estimate}")]
    AccuracyNotReached { best: f64, estimate: f64 },

    #[error("function is not in the tail space L^1_2s: {0}")]
    TailSpace(String),

    #[error("series truncation k_max = {k_max} too small at R = {radius}: remainder {remainder} exceeds 10% of partial sum {partial}")]
    KmaxTooSmall {
        k_max: usize,
        radius: f64,
        remainder: f64,
        partial: f64,
    },

    #[error("regime error: {0}")]
    Regime(String),

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("calibration impossible: operator value {value} <= 0 at radius {radius}")]
    CalibrationImpossible { radius: f64, value: f64 },
}
