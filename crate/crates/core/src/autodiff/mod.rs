//! Minimal reverse-mode automatic differentiation.

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
