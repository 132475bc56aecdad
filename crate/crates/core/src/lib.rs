//! Spiking-neuron recurrences with two execution modes: serial stepping for
//! inference and parallel-through-time evaluation for training.

pub mod energy;
pub mod error;
pub mod neurons;
pub mod numerics;
pub mod props;
pub mod scan;
pub mod tasks;

pub use error::{Error, Result};
pub use numerics::Tensor;
