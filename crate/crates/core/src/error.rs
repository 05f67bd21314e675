use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid time mesh: {0}")]
    InvalidMesh(String),

    #[error("field has {actual} values but the grid has {expected} points")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dirichlet grid requires ghost values but none were supplied")]
    MissingGhosts,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    StabilityViolated { dt: f64, limit: f64 },

    #[error("positivity lost at step {step}: min u = {min:e} (floor {floor:e})")]
    PositivityLost { step: usize, min: f64, floor: f64 },

    #[error("non-positive value {value:e} at index {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("pressure invariant violated at index {index}: coefficient {value:e} <= 0")]
    PressureInvariant { index: usize, value: f64 },

    #[error("parameter regime violated: {0}")]
    Regime(String),

    #[error("history too short: {0}")]
    HistoryTooShort(String),

    #[error("point {0:?} lies outside the interpolation domain")]
    OutOfRange(Vec<f64>),

    #[error("time {0} is not on the recorded mesh")]
    OffMesh(f64),

    #[error("measure mismatch: {0}")]
    MeasureMismatch(String),

    #[error("too few usable paths: {usable} < {required}")]
    TooFewPaths { usable: usize, required: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
