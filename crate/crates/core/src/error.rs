use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operator must be square for {0}")]
    NotSquare(&'static str),

    #[error("projected problem is rank deficient (sigma_min = {sigma_min:e}); use lambda > 0 or truncation")]
    RankDeficient { sigma_min: f64 },

    #[error("discrepancy equation not yet attainable: min residual {min_residual:e} > target {target:e}")]
    DiscrepancyInfeasible { min_residual: f64, target: f64 },

    #[error("solution norm collapsed to zero during fixed-point iteration")]
    SolutionCollapsed,

    #[error("krylov breakdown at step {step}")]
    Breakdown { step: usize },

    #[error("oracle limited to {limit} rows/cols, got {m}x{n}")]
    OracleTooLarge { m: usize, n: usize, limit: usize },

    #[error("line search stalled")]
    Stalled,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
