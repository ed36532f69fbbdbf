use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    Convergence { sweeps: usize, off_norm: f64 },
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("not enough data: need at least {needed} points, got {got}")]
    Arity { needed: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("interpolation range: {0}")]
    Interpolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
