//! Minimal dense tensors with tape-based reverse-mode differentiation.
//!
//! Values are computed eagerly as ops are recorded on a [`Tape`]; a single
//! reverse sweep from a scalar accumulates gradients into leaf tensors.
//! Reductions accumulate in `f64` in a fixed order, so identical inputs give
//! bitwise-identical values and gradients.

pub mod dist;
mod element;
mod error;
pub mod gradcheck;
mod kernels;
pub mod nn;
pub mod optim;
mod tape;
mod tensor;

pub use dist::{cross_entropy, entropy, kl_divergence};
pub use element::Element;
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_many, GradCheckReport};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Clamp used inside every logarithm of a probability.
pub const LOG_EPS: f64 = 1e-12;
