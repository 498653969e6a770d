//! Differentiable layer kernels. Every forward map has an exact analytic
//! backward; [`grad_check`] validates any of them numerically.

mod activation;
mod concat;
mod conv;
mod dense;
pub mod gradcheck;
mod pool;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar};
pub use concat::{concat_channels, concat_many, split_channels, split_many};
pub use conv::{
    conv2d, conv2d_backward, conv2d_backward_with, conv2d_input_grad, transposed_conv2d,
    transposed_conv2d_backward, ConvGrads, ConvParams, DeconvParams,
};
pub use dense::{fully_connected, fully_connected_backward, DenseGrads};
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport};
pub use pool::{max_pool2, max_pool2_backward, PoolIndices};
