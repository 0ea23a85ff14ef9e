use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("non-finite value {value} passed to the reaction term")]
    Domain { value: f64 },
    #[error("operation not supported: {0}")]
    Unsupported(String),
    #[error("ODE solution diverged at t = {time} (last value {value})")]
    Divergence { time: f64, value: f64 },
    #[error("ODE step size underflow at t = {time}")]
    StepUnderflow { time: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical blow-up at grid index {index}, t = {time}")]
    BlowUp { index: usize, time: f64 },
    #[error("level {alpha} is not attained in ({min}, {max})")]
    LevelRange { alpha: f64, min: f64, max: f64 },
    #[error("level {alpha} is crossed {count} times; a unique crossing was requested")]
    Ambiguous { alpha: f64, count: usize },
    #[error("not enough data: {0}")]
    Insufficient(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("terrace construction stopped after {stages} stage(s): {reason}")]
    PartialTerrace { stages: usize, reason: String },
    #[error("speed ordering violated: c[{index}] = {left} exceeds c[{}] = {right} beyond 3 standard errors", index + 1)]
    SpeedOrdering { index: usize, left: f64, right: f64 },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
