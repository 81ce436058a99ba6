pub use vtcc_tensor as tensor;

pub mod backbone;
pub mod augment;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod heads;
pub mod hungarian;
pub mod image;
pub mod kmeans;
pub mod metrics;
pub mod loss;
pub mod model;
pub mod nn;
pub mod rng;
pub mod state;
pub mod train;

pub use error::{Result, VtccError};
