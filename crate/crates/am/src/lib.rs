//! Acoustic model: a convolutional front end over mel filter banks, a stack
//! of factorized time-delay layers, optional time-restricted self-attention,
//! and a frame-level cross-entropy training loop with learning-rate decay,
//! dropout scheduling, semi-orthogonal constraints and checkpoint averaging.

pub mod analysis;
pub mod config;
pub mod embedding;
pub mod labels;
pub mod model;
pub mod train;

pub use analysis::{
    extract_profile, param_report, profile_to_csv, profile_to_svg, sort_heads, summarize,
    AttentionProfile, AttentionSummary, HeadProfile,
};
pub use config::{ModelConfig, TrainConfig};
pub use embedding::{speaker_embedding, EMBEDDING_DIM};
pub use labels::{load_labels, parse_labels};
pub use model::{AcousticModel, Posteriors};
pub use train::{average_checkpoints, train, EpochStats, TrainData, Utterance};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum AmError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Nn(#[from] descant_nn::NnError),
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
    #[error("bad checkpoint file: {0}")]
    BadCheckpoint(String),
    #[error("bad label file at line {line}: {msg}")]
    BadLabelFile { line: usize, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("model has no attention layer")]
    NoAttention,
    #[error("no utterance long enough for a full attention context")]
    NoFullContext,
}

pub type Result<T> = std::result::Result<T, AmError>;
