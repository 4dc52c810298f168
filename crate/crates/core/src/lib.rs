//! Graph representations of multivariate time series and the GNN
//! classifiers benchmarked over them.

pub mod bench;
pub mod edges;
pub mod error;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod training;
pub mod ts_io;

pub use error::{Error, Result};
