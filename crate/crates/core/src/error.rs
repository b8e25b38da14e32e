use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("calibration infeasible: {0}")]
    CalibrationInfeasible(String),
    /// The requested representation or formula does not exist for this input.
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("test inapplicable: {0}")]
    TestInapplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
