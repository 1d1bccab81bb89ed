use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible configuration: {0}")]
    Configuration(String),

    #[error("collision: agent {agent} at t={time} has spacing {spacing} < {ell}")]
    Collision { agent: usize, time: f64, spacing: f64, ell: f64 },

    #[error("insufficient history: need t={needed}, oldest snapshot at t={oldest}")]
    InsufficientHistory { needed: f64, oldest: f64 },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("CFL violation at cell {cell}: effective-density denominator {denominator} <= 0")]
    CflViolation { cell: usize, denominator: f64 },

    #[error("density {rho} in cell {cell} left [0, {rho_max}] at t={time}")]
    BoundsViolation { cell: usize, time: f64, rho: f64, rho_max: f64 },

    #[error("zero spacing for agent {0}")]
    ZeroSpacing(usize),

    #[error("record mismatch: {0}")]
    RecordMismatch(String),
}
