//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures of log-weight arithmetic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    /// Every log-weight is negative infinity: the particle system carries no
    /// mass and nothing meaningful can be normalized or resampled.
    #[error("all weights are zero (every log-weight is -inf)")]
    AllZeroWeights,
    /// A log-weight is NaN or positive infinity.
    #[error("invalid log-weight {0}")]
    InvalidWeight(f64),
    /// The weight vector is empty.
    #[error("empty weight vector")]
    Empty,
}

/// Failures raised by the sweep kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    /// All particle weights vanished at step `t` (0-based). The sweep aborts
    /// loudly instead of resampling from nothing; this almost always means
    /// the model cannot explain the data at that step.
    #[error("all particle weights vanished at step {t}")]
    AllZeroWeights { t: usize },
    /// A particle weight became NaN or +inf at step `t`.
    #[error("invalid log-weight {value} at step {t}")]
    InvalidWeight { t: usize, value: f64 },
    /// The retained trajectory does not match the observation horizon.
    #[error("retained trajectory has {got} steps, expected {expected}")]
    RetainedLengthMismatch { got: usize, expected: usize },
    /// A particle slot index fell outside `0..n`.
    #[error("particle index {index} out of range for {n} particles")]
    IndexOutOfRange { index: usize, n: usize },
    /// Conditional sweeps need at least two particles; unconditional need one.
    #[error("{kind} sweep needs at least {min} particles, got {got}")]
    TooFewParticles {
        kind: &'static str,
        min: usize,
        got: usize,
    },
    /// Observation sequence is empty.
    #[error("observation sequence is empty")]
    NoObservations,
}

impl From<WeightError> for SweepError {
    fn from(e: WeightError) -> Self {
        match e {
            WeightError::AllZeroWeights | WeightError::Empty => {
                SweepError::AllZeroWeights { t: usize::MAX }
            }
            WeightError::InvalidWeight(v) => SweepError::InvalidWeight {
                t: usize::MAX,
                value: v,
            },
        }
    }
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    /// Invalid sampler or model configuration; the string names the field.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Model parameter validation failure.
    #[error("invalid model: {0}")]
    Model(String),
    /// Exact enumeration would exceed the configured state budget.
    #[error("enumeration too large: {states} paths exceed limit {limit}")]
    EnumerationTooLarge { states: u64, limit: u64 },
    /// An estimator was asked to average an empty record set.
    #[error("empty record set")]
    EmptyRecord,
    /// Estimator input dimensions disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A record sink failed while consuming chain output.
    #[error("record sink: {0}")]
    Sink(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
