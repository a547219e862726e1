//! Stateless forward and backward kernels.
//!
//! The [`Tape`](crate::tape::Tape) records these into a differentiable graph;
//! they are also usable directly on plain tensors.

pub mod activation;
pub mod channels;
pub mod conv;
pub mod gemm;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod pool;

pub use activation::{argmax, relu, sigmoid, softmax};
pub use channels::{concat_channels, slice_channels};
pub use conv::{conv2d, conv2d_backward_data, conv_transpose2d, ConvGeometry};
pub use linear::inner_product;
pub use loss::{sigmoid_bce_loss, softmax_ce_loss};
pub use norm::{batchnorm2d, Mode, RunningStats};
pub use pool::{max_unpool2d, maxpool2d, pool_out, PoolIndices};
