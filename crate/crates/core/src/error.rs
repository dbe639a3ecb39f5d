use std::fmt;
use std::io;

/// Library-wide error type.
#[derive(Debug)]
pub enum Error {
    /// Invalid or inconsistent configuration.
    Config(String),
    /// Argument outside the documented domain of an operation.
    Domain(String),
    /// A caller broke an operation contract (e.g. applying an infeasible action).
    Contract(String),
    /// Initialization could not produce the required structure.
    Init(String),
    /// Numerical failure: filter divergence, factorization failure, singular innovation.
    Numerical(String),
    Io(io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Init(msg) => write!(f, "initialization error: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical error: {msg}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}
