//! Dense `f64` tensors with reverse-mode differentiation and gradient checking.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheck};
pub use tape::{CustomOp, Gradients, Tape, Var};
pub use tensor::{logsumexp, matmul, Tensor};
