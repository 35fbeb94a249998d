//! Error type shared across the crate.

use std::fmt;

/// Errors raised by dataset loading, the load-flow solver, and the case runner.
#[derive(Debug)]
pub enum Error {
    /// Dataset or config content failed to parse or carries an invalid value.
    Dataset(String),
    /// The feeder graph is not a radial tree rooted at the slack bus.
    Topology(String),
    /// A runtime configuration value is out of range or inconsistent.
    Config(String),
    /// A bus voltage reached zero while forming equivalent current injections.
    SingularInjection { bus: u32 },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dataset(msg) => write!(f, "dataset error: {msg}"),
            Error::Topology(msg) => write!(f, "topology error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::SingularInjection { bus } => {
                write!(f, "singular injection: zero voltage at bus {bus}")
            }
            Error::Io(err) => write!(f, "io error: {err}"),
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

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Dataset(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Dataset(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
