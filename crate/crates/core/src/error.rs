use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("non-finite sample at node {index} (x = {coords:?})")]
    NonFinite { index: usize, coords: Vec<f64> },
    #[error("grid mismatch: {0}")]
    Mismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole of the gamma function at {0}")]
    Pole(String),
    #[error("invalid piece: {0}")]
    Piece(String),
    #[error("search failed at level {level}: {reason}")]
    Search { level: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
