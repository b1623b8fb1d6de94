use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A problem parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// The arguments are admissible parameters but the operation is undefined there.
    #[error("domain error: {0}")]
    Domain(String),
    /// An iteration or integration failed to meet its accuracy contract.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A query fell outside the range covered by a trace or grid.
    #[error("range error: {0}")]
    Range(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("window error: {0}")]
    Window(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
