use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("non-finite objective at r = {0}")]
    NonFinite(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
