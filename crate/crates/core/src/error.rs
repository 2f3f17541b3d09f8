use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("state became non-finite at t = {time}")]
    BlowUp { time: f64 },
    #[error("generalized Lyapunov operator is singular at lambda = {lambda}")]
    SingularOperator { lambda: f64 },
    #[error("equality solution not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("assumption not satisfied: {0}")]
    Assumption(String),
}

pub type Result<T> = std::result::Result<T, Error>;
