//! Dense matrices and the differentiable primitives the network is built from.

mod gradcheck;
mod matrix;
pub mod ops;
mod rng;
pub mod tape;

pub use gradcheck::{central_difference, grad_check, GradCheckReport};
pub use matrix::Matrix;
pub use rng::RngState;
pub use tape::{GradTape, Record, Site};

/// Whether a forward pass is part of training or inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
