//! Dense tensor kernels with hand-written forward/backward passes for the
//! layer set used by the acoustic model, plus a finite-difference gradient
//! checker. All kernels are generic over `f32`/`f64`; training runs in 32-bit
//! and gradient checks re-run the same code in 64-bit.

pub mod attention;
pub mod conv;
pub mod gradcheck;
pub mod layers;
pub mod linalg;
pub mod loss;
pub mod semiorth;
pub mod tensor;

pub use attention::{Attention, AttentionContext};
pub use conv::{Conv2d, MaxPool2};
pub use layers::{Affine, BatchNorm, Dropout, Mode, Relu, TdnnfLayer};
pub use loss::{log_softmax, log_softmax_xent};
pub use semiorth::{semi_orth_deviation, semi_orthogonal_step};
pub use tensor::{Parameter, Scalar, Tensor};

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("degenerate matrix: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, NnError>;
