//! Language modelling: pronunciation lexicons, backoff n-gram models with
//! interpolated Kneser-Ney smoothing, ARPA serialization, and a small
//! recurrent LM for second-pass rescoring.

pub mod arpa;
pub mod lexicon;
pub mod ngram;
pub mod rnnlm;

pub use lexicon::{load_lexicon, Lexicon, PhoneTranscription, UnkModel};
pub use ngram::{train_ngram, NGramModel, Smoothing, TextCorpus, BOS, EOS, UNK};
pub use rnnlm::{train_rnnlm, RecurrentLM, RnnlmConfig};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum LmError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon parse error at line {line}: {msg}")]
    BadLexicon { line: usize, msg: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("n-gram order {0} out of range (expected 1..=4)")]
    BadOrder(usize),
    #[error("out-of-vocabulary word without unk: {0}")]
    Oov(String),
    #[error("model already has an unk word")]
    UnkAlreadyAttached,
    #[error("model has no count tables (loaded from text); cannot attach unk")]
    NoCounts,
    #[error("empty phone inventory")]
    EmptyInventory,
    #[error("bad model file at line {line}: {msg}")]
    BadModelFile { line: usize, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArg(String),
}

pub type Result<T> = std::result::Result<T, LmError>;
