//! Dense row-major tensors, a reverse-mode gradient tape, named parameter
//! sets and a central-difference gradient checker.
//!
//! All math runs in `f64`. Shapes must match exactly; the only broadcasts are
//! scalar-tensor ([`Tape::affine`]) and the explicit row-wise ops
//! [`Tape::add_bias`] and [`Tape::scale_rows`].

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckReport, ABS_FALLBACK_BELOW};
pub use params::{ParamId, ParamSet, Parameter};
pub use tape::{Tape, Var};
pub use tensor::{cross_entropy, softmax, Tensor, LOG_FLOOR};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("id {id} out of range for size {size}")]
    IdRange { id: usize, size: usize },
    #[error("every position is masked")]
    AllMasked,
    #[error("value was not recorded on this tape")]
    NotRecorded,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
