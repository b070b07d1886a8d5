//! Library side of the `acpose` command-line tool: dataset files, JSON/CSV
//! rendering and the command implementations.

pub mod commands;
pub mod dataset;

use std::path::PathBuf;

use thiserror::Error;

pub use dataset::{AttitudeDeg, Dataset, Record};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// `line` is 1-based; 0 means the problem is not tied to one line.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] acpose_core::Error),
}

impl CliError {
    /// Process exit code; one per error class. Flag validation by the argument
    /// parser exits with 2.
    pub fn exit_code(&self) -> i32 {
        use acpose_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Parse { .. } => 4,
            CliError::Core(e) => match e {
                E::DegenerateInput(_) => 5,
                E::DegenerateNullspace { .. } => 6,
                E::EigenFailure { .. } => 7,
                E::NoModelFound => 8,
                E::TooFewCorrespondences { .. } => 9,
                E::InvalidConfig(_) => 10,
                _ => 1,
            },
        }
    }
}
