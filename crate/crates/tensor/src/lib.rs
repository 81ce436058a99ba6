//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! Every operation returns a new [`Tensor`]; when any input requires grad
//! the result records its inputs and a backward rule. [`Tensor::backward`]
//! gathers the recorded graph into a [`Tape`] ordered by creation and walks
//! it in reverse, leaving gradients on the leaves.
//!
//! ```
//! use vtcc_tensor::Tensor;
//!
//! let x = Tensor::parameter(vec![1.0f64, -2.0, 3.0], &[3]).unwrap();
//! x.square().sum().backward().unwrap();
//! assert_eq!(x.grad().unwrap(), vec![2.0, -4.0, 6.0]);
//! ```

mod autograd;
mod error;
pub mod gradcheck;
mod ops;
mod optim;
mod real;
mod tensor;

pub use autograd::{Tape, TapeEntry};
pub use error::{Result, TensorError};
pub use ops::{conv_output_size, NormMode, RunningStats, LAYER_NORM_EPS, LOG_CLAMP};
pub use optim::{Adam, AdamConfig};
pub use real::{DType, Real};
pub use tensor::{is_grad_enabled, no_grad, Tensor};
