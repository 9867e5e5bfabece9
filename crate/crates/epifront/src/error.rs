use std::fmt;

/// Errors produced by configuration, validation, and numerical routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range.
    InvalidParam(String),
    /// A run configuration failed structural validation.
    Config(String),
    /// An operation needs data the caller did not record.
    MissingData(String),
    /// A numerical routine failed to reach its tolerance.
    Numerics(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParam(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::MissingData(msg) => write!(f, "missing data: {msg}"),
            Error::Numerics(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
