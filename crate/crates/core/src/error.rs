//! Error type shared by every module of the simulator.

use thiserror::Error;

use crate::dt_algebra::SeriesError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Series(#[from] SeriesError),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("singular {what} (|det| = {det:e})")]
    Singular { what: String, det: f64 },

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config error in `{id}`: {reason}")]
    Config { id: String, reason: String },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("initialization inconsistent: {0}")]
    Init(String),

    #[error("step failed at t = {time:.9} s in `{variable}`: {reason}")]
    Step {
        time: f64,
        variable: String,
        reason: String,
    },

    #[error("Newton iteration failed at t = {time:.9} s after {iterations} iterations (residual {residual:e})")]
    Newton {
        time: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("benchmark mismatch: {0}")]
    Benchmark(String),

    #[error("no step in [{h_min:e}, {h_max:e}] s keeps the error within {tolerance:e}")]
    NoAdmissibleStep {
        h_min: f64,
        h_max: f64,
        tolerance: f64,
    },

    #[error("invalid solver configuration: {0}")]
    Solver(String),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            id: id.into(),
            reason: reason.into(),
        }
    }
}
