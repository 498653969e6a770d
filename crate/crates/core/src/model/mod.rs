//! The full saliency network: recurrent convolutional encoder, hierarchical
//! decoder with one saliency head per scale, and the fusion convolution
//! module that merges the enabled heads into the final map.

mod checkpoint;
mod config;
mod forward;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load, read_checkpoint, save, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{param_specs, NetworkConfig, ParamKind, ParamSpec, ENCODER_STRIDE, RECURRENT_BLOCKS};
pub use forward::{DecoderTrace, EncoderTrace, FcmTrace, ForwardTrace, LogitGrads};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A learnable tensor and its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<S = f64> {
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
}

impl<S: Scalar> Param<S> {
    pub fn new(value: Tensor<S>) -> Self {
        let grad = value.zeros_like();
        Param { value, grad }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsdnnModel<S = f64> {
    config: NetworkConfig,
    params: IndexMap<String, Param<S>>,
}

impl<S: Scalar> MsdnnModel<S> {
    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero, drawn in
    /// parameter order from a generator seeded with `seed`.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = IndexMap::new();
        for spec in param_specs(&config) {
            let value = if spec.kind == ParamKind::Bias {
                Tensor::zeros(&spec.shape)?
            } else {
                let a = (6.0 / spec.fan_in() as f64).sqrt();
                Tensor::uniform(&spec.shape, -a, a, &mut rng)?
            };
            params.insert(spec.path, Param::new(value));
        }
        Ok(MsdnnModel { config, params })
    }

    /// A model with every parameter set to zero.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut params = IndexMap::new();
        for spec in param_specs(&config) {
            params.insert(spec.path, Param::new(Tensor::zeros(&spec.shape)?));
        }
        Ok(MsdnnModel { config, params })
    }

    pub(crate) fn from_parts(config: NetworkConfig, values: Vec<(String, Tensor<S>)>) -> Result<Self> {
        config.validate()?;
        let params = values.into_iter().map(|(k, v)| (k, Param::new(v))).collect();
        Ok(MsdnnModel { config, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &IndexMap<String, Param<S>> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut IndexMap<String, Param<S>> {
        &mut self.params
    }

    pub fn param(&self, path: &str) -> Result<&Tensor<S>> {
        self.params
            .get(path)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Consistency(format!("model has no parameter `{path}`")))
    }

    pub fn grad(&self, path: &str) -> Result<&Tensor<S>> {
        self.params
            .get(path)
            .map(|p| &p.grad)
            .ok_or_else(|| Error::Consistency(format!("model has no parameter `{path}`")))
    }

    pub(crate) fn accumulate(&mut self, path: &str, grad: &Tensor<S>) -> Result<()> {
        let p = self
            .params
            .get_mut(path)
            .ok_or_else(|| Error::Consistency(format!("model has no parameter `{path}`")))?;
        p.grad.accumulate(grad)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(S::zero());
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Same model at another precision (gradients reset).
    pub fn cast<T: Scalar>(&self) -> MsdnnModel<T> {
        MsdnnModel {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|(k, p)| (k.clone(), Param::new(p.value.cast())))
                .collect(),
        }
    }
}
