use thiserror::Error;

/// Errors produced by the operators, mask generators and harnesses.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    InvalidShape(Vec<usize>),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid keep probability {0}: must lie in (0, 1]")]
    InvalidProbability(f64),

    #[error("empty subsample: floor({n} * {p}) = 0 elements would be kept")]
    EmptySubsample { n: usize, p: f64 },

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("invalid pooling: {0}")]
    InvalidPooling(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("stale cache: recorded for parameter version {cache}, parameters are at {params}")]
    StaleCache { cache: u64, params: u64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    TrainingFailure { step: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Validates a keep probability against `(0, 1]`.
pub(crate) fn check_keep_prob(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}
