//! Drug-pair synergy prediction with causal substructure disentanglement:
//! datasets and split protocols, the model and its losses, training,
//! inference and evaluation metrics.

pub mod data;
mod error;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod train;

pub use error::{CoreError, Result};
