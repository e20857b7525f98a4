use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {malformed} of {total} rows malformed exceeds the {limit:.1}% limit")]
    TooManyMalformedRows {
        path: PathBuf,
        malformed: usize,
        total: usize,
        limit: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("unknown user id '{id}'; nearest known ids: {}", suggestions.join(", "))]
    UnknownUser { id: String, suggestions: Vec<String> },

    #[error("unknown song id '{0}'")]
    UnknownSong(String),

    #[error("user {0} has no ratings; cannot predict")]
    NoRatingsForUser(usize),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("bad configuration line {line}: {msg}")]
    Config { line: usize, msg: String },
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code classification: 2 for data-dependent errors,
    /// 3 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::TooManyMalformedRows { .. }
            | Error::EmptyInput(_)
            | Error::UnknownUser { .. }
            | Error::UnknownSong(_)
            | Error::NoRatingsForUser(_)
            | Error::Config { .. } => 2,
            Error::InvalidParameter(_) => 1,
            Error::Write { .. } | Error::Divergence { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
