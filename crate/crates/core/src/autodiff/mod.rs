//! Reverse-mode automatic differentiation over dense tensors.

mod optim;
mod tape;
pub mod tensor;

pub use optim::Adam;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
