//! Multi-scale recurrent convolutional network for salient object
//! detection, built from scratch on dense `f64` tensors.

pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod nnops;
pub mod rcl;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod validation;

pub use data::Sample;
pub use error::{Error, Result};
pub use metrics::{MetricsConfig, MetricsReport};
pub use model::{ForwardTrace, LogitGrads, MsdnnModel, NetworkConfig};
pub use rcl::RclConfig;
pub use scalar::Scalar;
pub use tensor::{ReduceOp, Tensor};
pub use train::{TrainConfig, TrainOutputs};
