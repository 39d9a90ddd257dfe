use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    /// The trap kernel's exponential moment cannot push the truncation error
    /// below the requested bound within the allowed margin.
    #[error("window margin of {needed} sites needed for tail bound {epsilon:e} (limit {limit})")]
    MarginUnachievable { needed: u64, limit: u64, epsilon: f64 },

    #[error("window half-width {given} too small: certified bound needs at least {required}")]
    WindowTooSmall { given: i64, required: i64 },

    #[error("no exponential moment declared for kernel: {0}")]
    NoExponentialMoment(String),

    #[error("all importance weights vanished ({0} paths)")]
    DegenerateWeights(usize),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
