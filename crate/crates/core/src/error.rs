use thiserror::Error;

/// Errors raised by the model, the integrators and the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model parameter is outside its admissible range.
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The quantity is undefined for the given parameters (e.g. a noise
    /// threshold requested with `sigma = 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent run configuration (step counts, divisibility, lengths).
    #[error("configuration error: {0}")]
    Config(String),

    /// The integrator produced a state it cannot continue from.
    #[error("numerical failure at t = {time}: {reason}")]
    Numerical { time: f64, reason: String },

    /// An error raised while simulating one path of an ensemble.
    #[error("path {path_index}: {source}")]
    Path {
        path_index: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips `Path` wrappers and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Path { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
