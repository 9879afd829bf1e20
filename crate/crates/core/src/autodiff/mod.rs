//! Differentiable dense arrays, parameter storage and optimizers.

pub mod checkpoint;
pub mod gradcheck;
mod optim;
mod params;
mod tape;

pub use optim::{Optimizer, OptimizerKind};
pub use params::{DiffArray, ParameterStore};
pub use tape::{ConvSpec, Gradients, Tape, Var};
