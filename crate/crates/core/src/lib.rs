pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod eval;
pub mod generator;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod trainer;

pub use error::{Error, Result};
