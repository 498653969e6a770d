//! Recurrent convolutional layer.
//!
//! A feed-forward kernel reads the layer input `u` and a recurrent kernel
//! reads the layer's own previous state; both are shared across the `T`
//! unfolded time steps:
//!
//! ```text
//! x_0 = relu(conv(u; w_f) + b)
//! x_t = relu(conv(u; w_f) + conv(x_{t-1}; w_r) + b),   t = 1..T
//! ```
//!
//! Unfolded, one layer is a `T + 1` stage feed-forward chain with tied
//! weights, so backpropagation sums the per-step weight gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnops::{conv2d, conv2d_backward, relu, relu_backward, ConvParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RclConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub timesteps: usize,
    pub padding: usize,
}

impl RclConfig {
    /// 3×3 kernels with size-preserving padding.
    pub fn new(in_channels: usize, out_channels: usize, timesteps: usize) -> Self {
        RclConfig {
            in_channels,
            out_channels,
            kernel_size: 3,
            timesteps,
            padding: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("RCL channel counts must be positive".into()));
        }
        if self.kernel_size.is_multiple_of(2) || 2 * self.padding + 1 != self.kernel_size {
            return Err(Error::Config(format!(
                "RCL kernel {} with padding {} does not preserve spatial size",
                self.kernel_size, self.padding
            )));
        }
        Ok(())
    }

    pub fn feedforward_shape(&self) -> [usize; 4] {
        let k = self.kernel_size;
        [self.out_channels, self.in_channels, k, k]
    }

    pub fn recurrent_shape(&self) -> [usize; 4] {
        let k = self.kernel_size;
        [self.out_channels, self.out_channels, k, k]
    }
}

/// Borrowed RCL weights: feed-forward kernel `[Cout, Cin, k, k]`, recurrent
/// kernel `[Cout, Cout, k, k]`, bias `[Cout]`.
#[derive(Clone, Copy, Debug)]
pub struct RclParams<'a, S = f64> {
    pub w_f: &'a Tensor<S>,
    pub w_r: &'a Tensor<S>,
    pub b: &'a Tensor<S>,
}

impl<S: Scalar> RclParams<'_, S> {
    fn check(&self, cfg: &RclConfig) -> Result<()> {
        cfg.validate()?;
        if self.w_f.shape() != cfg.feedforward_shape()
            || self.w_r.shape() != cfg.recurrent_shape()
            || self.b.shape() != [cfg.out_channels]
        {
            return Err(Error::shape(format!(
                "RCL parameters {:?}/{:?}/{:?} do not match config {cfg:?}",
                self.w_f.shape(),
                self.w_r.shape(),
                self.b.shape()
            )));
        }
        Ok(())
    }

    fn feedforward(&self, cfg: &RclConfig) -> ConvParams<'_, S> {
        ConvParams {
            weights: self.w_f,
            bias: Some(self.b),
            stride: 1,
            padding: cfg.padding,
        }
    }

    fn recurrent(&self, cfg: &RclConfig) -> ConvParams<'_, S> {
        ConvParams {
            weights: self.w_r,
            bias: None,
            stride: 1,
            padding: cfg.padding,
        }
    }
}

/// Everything the backward pass needs: the layer input and all `T + 1`
/// states.
#[derive(Clone, Debug, PartialEq)]
pub struct RclCache<S = f64> {
    pub input: Tensor<S>,
    pub states: Vec<Tensor<S>>,
}

impl<S> RclCache<S> {
    pub fn output(&self) -> &Tensor<S> {
        self.states.last().expect("at least x_0 is cached")
    }
}

#[derive(Clone, Debug)]
pub struct RclGrads<S = f64> {
    pub input: Tensor<S>,
    pub w_f: Tensor<S>,
    pub w_r: Tensor<S>,
    pub b: Tensor<S>,
}

pub fn rcl_forward<S: Scalar>(u: &Tensor<S>, params: &RclParams<'_, S>, cfg: &RclConfig) -> Result<RclCache<S>> {
    params.check(cfg)?;
    let feedforward = conv2d(u, &params.feedforward(cfg))?;
    let mut states = Vec::with_capacity(cfg.timesteps + 1);
    states.push(relu(&feedforward));
    for t in 1..=cfg.timesteps {
        let recurrent = conv2d(&states[t - 1], &params.recurrent(cfg))?;
        states.push(relu(&feedforward.add(&recurrent)?));
    }
    Ok(RclCache {
        input: u.clone(),
        states,
    })
}

pub fn rcl_backward<S: Scalar>(
    cache: &RclCache<S>,
    params: &RclParams<'_, S>,
    cfg: &RclConfig,
    grad_out: &Tensor<S>,
) -> Result<RclGrads<S>> {
    params.check(cfg)?;
    if cache.states.len() != cfg.timesteps + 1 {
        return Err(Error::shape(format!(
            "RCL cache holds {} states, config expects {}",
            cache.states.len(),
            cfg.timesteps + 1
        )));
    }
    cache.output().same_shape(grad_out, "rcl_backward")?;

    let mut grad_w_r = params.w_r.zeros_like();
    let mut grad_state = grad_out.clone();
    let mut grad_feedforward = grad_out.zeros_like();
    for t in (1..=cfg.timesteps).rev() {
        let grad_z = relu_backward(&cache.states[t], &grad_state)?;
        grad_feedforward.accumulate(&grad_z)?;
        let g = conv2d_backward(&cache.states[t - 1], &params.recurrent(cfg), &grad_z)?;
        grad_w_r.accumulate(&g.weights)?;
        grad_state = g.input.expect("input gradient requested");
    }
    grad_feedforward.accumulate(&relu_backward(&cache.states[0], &grad_state)?)?;

    let g = conv2d_backward(&cache.input, &params.feedforward(cfg), &grad_feedforward)?;
    Ok(RclGrads {
        input: g.input.expect("input gradient requested"),
        w_f: g.weights,
        w_r: grad_w_r,
        b: g.bias,
    })
}

/// Depth of the unfolded encoder: every recurrent block contributes `T + 1`
/// convolution stages, plus the two-layer convolutional stem.
pub fn effective_depth(cfg: &RclConfig, n_recurrent_blocks: usize) -> usize {
    n_recurrent_blocks * (cfg.timesteps + 1) + 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> Tensor {
        Tensor::new(&[1, 1, 1, 1], v).unwrap()
    }

    #[test]
    fn scalar_recursion() {
        let cfg = RclConfig {
            in_channels: 1,
            out_channels: 1,
            kernel_size: 1,
            timesteps: 2,
            padding: 0,
        };
        let (wf, wr, b) = (scalar(1.0), scalar(0.5), Tensor::zeros(&[1]).unwrap());
        let cache = rcl_forward(&scalar(1.0), &RclParams { w_f: &wf, w_r: &wr, b: &b }, &cfg).unwrap();
        let xs: Vec<f64> = cache.states.iter().map(|s| s.data()[0]).collect();
        assert_eq!(xs, vec![1.0, 1.5, 1.75]);
    }

    #[test]
    fn bias_only_fixed_point() {
        let cfg = RclConfig::new(2, 3, 3);
        let wf = Tensor::zeros(&cfg.feedforward_shape()).unwrap();
        let wr = Tensor::zeros(&cfg.recurrent_shape()).unwrap();
        let b = Tensor::new(&[3], 0.25).unwrap();
        let u = Tensor::uniform(&[1, 2, 4, 4], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cache = rcl_forward(&u, &RclParams { w_f: &wf, w_r: &wr, b: &b }, &cfg).unwrap();
        for s in &cache.states {
            assert!(s.data().iter().all(|&v| v == 0.25));
        }
    }

    #[test]
    fn zero_grad_out() {
        let cfg = RclConfig::new(2, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let wf: Tensor = Tensor::uniform(&cfg.feedforward_shape(), -0.5, 0.5, &mut rng).unwrap();
        let wr = Tensor::uniform(&cfg.recurrent_shape(), -0.5, 0.5, &mut rng).unwrap();
        let b = Tensor::uniform(&[2], -0.5, 0.5, &mut rng).unwrap();
        let u = Tensor::uniform(&[1, 2, 4, 4], -1.0, 1.0, &mut rng).unwrap();
        let p = RclParams { w_f: &wf, w_r: &wr, b: &b };
        let cache = rcl_forward(&u, &p, &cfg).unwrap();
        let g = rcl_backward(&cache, &p, &cfg, &Tensor::zeros(&[1, 2, 4, 4]).unwrap()).unwrap();
        for t in [&g.input, &g.w_f, &g.w_r, &g.b] {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn config_and_shape_errors() {
        let bad = RclConfig { kernel_size: 4, padding: 1, ..RclConfig::new(1, 1, 1) };
        assert!(bad.validate().is_err());
        let cfg = RclConfig::new(2, 2, 1);
        let wf: Tensor = Tensor::zeros(&[2, 3, 3, 3]).unwrap();
        let wr = Tensor::zeros(&cfg.recurrent_shape()).unwrap();
        let b = Tensor::zeros(&[2]).unwrap();
        let u = Tensor::zeros(&[1, 2, 4, 4]).unwrap();
        assert!(rcl_forward(&u, &RclParams { w_f: &wf, w_r: &wr, b: &b }, &cfg).is_err());
    }

    #[test]
    fn depth_formula() {
        assert_eq!(effective_depth(&RclConfig::new(1, 1, 3), 4), 18);
        assert_eq!(effective_depth(&RclConfig::new(1, 1, 0), 4), 6);
        assert_eq!(effective_depth(&RclConfig::new(1, 1, 1), 4), 10);
    }
}
