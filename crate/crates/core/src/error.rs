use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("link outage: transmission rate is zero under current power and fading")]
    Outage,
    #[error("environment not reset")]
    NotReset,
    #[error("feasible action set is empty: {0}")]
    EmptyFeasibleSet(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("unknown state/action key: {0}")]
    UnknownKey(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("metrics error: {0}")]
    Metrics(String),
    #[error("bridge error: {0}")]
    Bridge(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
