//! Dense CPU tensors with tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied during one forward pass.
//! Parameters live in a [`ParamStore`] and are borrowed into the graph as
//! leaves, so a forward pass never copies weights. Calling
//! [`Graph::backward`] on a scalar loss yields [`Gradients`] for every leaf
//! that requires them.

mod error;
pub mod gradcheck;
mod graph;
pub mod init;
mod linalg;
mod params;
pub mod rng;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use params::{BoundParams, ParamId, ParamStore};
pub use tensor::Tensor;
