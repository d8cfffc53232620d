use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("alpha must be in (0,1), got {0}")]
    InvalidAlpha(f64),

    #[error("gamma must be in [0,1), got {0}")]
    InvalidGamma(f64),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid resampling plan: {0}")]
    InvalidPlan(String),

    #[error("p-value {value} at position {index} is outside (0,1]")]
    PValueOutOfRange { index: usize, value: f64 },

    #[error("degenerate correlation: constant input")]
    DegenerateCorrelation,

    #[error("invalid statistic input: {0}")]
    InvalidStatistic(String),

    #[error("exact enumeration infeasible: {combos} combinations at step {step} exceed the limit of {limit}")]
    EnumerationInfeasible { step: usize, combos: u128, limit: u64 },

    #[error("invalid simulation design: {0}")]
    InvalidDesign(String),
}

pub type Result<T> = std::result::Result<T, Error>;
