//! Token-passing beam decoder over a prefix-tree lexicon with dynamically
//! applied n-gram scores, word-lattice generation, and lattice rescoring
//! with higher-order n-gram and recurrent LMs.

pub mod decode;
pub mod graph;
pub mod lattice;
pub mod rescore;

pub use decode::{decode, DecodeParams, Hypothesis, LogPosteriors};
pub use graph::{build_graph, DecodeGraph};
pub use lattice::{Lattice, LatticeArc, LatticeNode, LatticeStats};
pub use rescore::{rescore_ngram, rescore_rnnlm};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum DecodeError {
    #[error("empty lexicon")]
    EmptyLexicon,
    #[error("word {0} is in the LM vocabulary but has no pronunciation and unk is disabled")]
    VocabMismatch(String),
    #[error("posterior dim {got} does not match graph phone-state inventory {want}")]
    StateMismatch { got: usize, want: usize },
    #[error("no complete path survived the search")]
    NoPath,
    #[error("empty lattice")]
    EmptyLattice,
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("word {0} cannot be mapped into the rescoring LM vocabulary")]
    Unmappable(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("bad lattice file at line {line}: {msg}")]
    BadLatticeFile { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, DecodeError>;
