//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error};
pub use tape::{Primitive, Tape, Var};
pub use tensor::Tensor;
