//! Reverse-mode differentiation over dense `f64` matrices, plus Adam.

mod adam;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::{Gradients, SparseRows, Tape, Var};
pub use tensor::Tensor;
