//! Waveform loading and feature extraction: mel spectrograms, MFCCs with
//! deltas, per-singer mean normalization, frame splicing, and speed
//! perturbation. Also the feature archive and dataset manifest formats.

pub mod archive;
pub mod manifest;
pub mod mel;
pub mod ops;
pub mod types;
pub mod wav;

pub use archive::{ArchiveReader, ArchiveWriter};
pub use manifest::{Manifest, ManifestEntry};
pub use mel::{mel_spectrogram, mfcc_with_deltas, num_frames};
pub use ops::{apply_cmvn, speed_perturb, splice};
pub use types::{AudioSignal, FeatureConfig, FeatureKind, FeatureMatrix, SpeakerStats};
pub use wav::{load_wav, write_wav};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum FeatureError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a RIFF/WAVE file: {0}")]
    NotWave(String),
    #[error("unsupported codec (want 16-bit PCM): {0}")]
    UnsupportedCodec(String),
    #[error("channels unsupported (want mono), got {0}")]
    NonMono(u16),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("signal shorter than one frame ({got} < {need} samples)")]
    TooShort { got: usize, need: usize },
    #[error("speaker mismatch: stats for {stats}, features for {features}")]
    SpeakerMismatch { stats: String, features: String },
    #[error("empty statistics for speaker {0}")]
    EmptyStats(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("bad manifest line {line}: {msg}")]
    BadManifest { line: usize, msg: String },
    #[error("bad archive: {0}")]
    BadArchive(String),
    #[error("unknown utterance: {0}")]
    UnknownUtterance(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;
