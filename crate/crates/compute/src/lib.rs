//! Numerical substrate: 2-D tensors, a reverse-mode tape, finite-difference
//! gradient checks, Adam, named RNG streams and the checkpoint format.

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod nn;
pub mod params;
pub mod rng;
mod scalar;
pub mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{ComputeError, Result};
pub use params::{Adam, ParameterStore};
pub use rng::RngStreams;
pub use scalar::Scalar;
pub use tape::{Gradients, Graph, Var};
pub use tensor::Tensor;
