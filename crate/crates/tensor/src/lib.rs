//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Everything is computed in `f64` on the CPU. A [`Graph`] is a Wengert tape:
//! forward operations append nodes, `backward` sweeps the tape in reverse and
//! accumulates gradients into every leaf created with `requires_grad`.
//! Operations are pure functions of their inputs and run with a fixed
//! reduction order, so results are bit-reproducible for identical inputs.

mod error;
mod graph;
mod optim;
mod params;
mod tensor;

pub mod gradcheck;
pub mod rng;

pub use error::{Result, TensorError};
pub use graph::{Graph, Var};
pub use optim::{adamw_step, OptimizerState};
pub use params::NamedParameterSet;
pub use tensor::Tensor;
