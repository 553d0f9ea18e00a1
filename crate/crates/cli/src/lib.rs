//! Command-line front end tying the whole pipeline together: corpus
//! synthesis, feature extraction, acoustic- and language-model training,
//! first-pass decoding, lattice rescoring, scoring, and attention analysis.

pub mod config;
pub mod pipeline;

pub use config::{sub_seed, LmSettings, RunConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("config line {line}: {msg}")]
    BadConfigLine { line: usize, msg: String },
    #[error("missing input: {what}")]
    MissingInput {
        what: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{stage}: {msg}")]
    Stage { stage: &'static str, msg: String },
}

impl CliError {
    /// Process exit code: configuration problems and missing inputs are
    /// distinguishable from internal pipeline failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadConfig(_) | CliError::BadConfigLine { .. } => 2,
            CliError::MissingInput { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
