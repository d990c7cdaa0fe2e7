use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Non-finite membrane or adaptation state produced by an integration step.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("non-finite neuron state (V={v}, w={w}); dt too large or parameters pathological")]
pub struct NonFiniteState {
    pub v: f64,
    pub w: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical overflow in {population}[{neuron}] at t={time:.6}s: {source}")]
    NumericalOverflow {
        population: String,
        neuron: usize,
        time: f64,
        #[source]
        source: NonFiniteState,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid band: {0}")]
    InvalidBand(String),
    #[error("invalid heart-rate profile: {0}")]
    InvalidProfile(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown population `{0}`")]
    UnknownPopulation(String),
    #[error("connectivity does not match network: {0}")]
    Validation(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status the CLI reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::NumericalOverflow { .. } => 4,
            _ => 2,
        }
    }
}
