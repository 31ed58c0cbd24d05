use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    /// Malformed binary or text file.
    #[error("format error in {path:?} at byte offset {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("frame {index}: {message}")]
    Frame { index: u64, message: String },

    #[error("least-squares system is rank deficient (rank {rank} of {unknowns}); deficient subspace dominated by modes {modes:?}")]
    RankDeficient {
        rank: usize,
        unknowns: usize,
        modes: Vec<(usize, usize)>,
    },

    #[error("insufficient usable apertures: {usable} ok apertures give {equations} equations for {unknowns} unknowns ({flags})")]
    InsufficientApertures {
        usable: usize,
        equations: usize,
        unknowns: usize,
        flags: String,
    },

    #[error("counter not enabled: {0}")]
    CounterDisabled(&'static str),

    #[error("{context}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for failures of the numerical kind (as opposed to bad input data).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::InsufficientApertures { .. }
        )
    }
}
