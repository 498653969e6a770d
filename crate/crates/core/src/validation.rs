//! Finite-difference validation suite: every differentiable kernel over a
//! range of seeds, plus a sampled check of the whole network's loss
//! gradient.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::synth_dataset;
use crate::error::{Error, Result};
use crate::model::{MsdnnModel, NetworkConfig};
use crate::nnops::{
    concat_many, conv2d, conv2d_backward, fully_connected, fully_connected_backward, grad_check, max_pool2,
    max_pool2_backward, relu, relu_backward, sigmoid, sigmoid_backward, split_many, transposed_conv2d,
    transposed_conv2d_backward, ConvParams, DeconvParams, GradCheckConfig, GradCheckReport,
};
use crate::rcl::{rcl_backward, rcl_forward, RclConfig, RclParams};
use crate::tensor::Tensor;
use crate::train::{make_batch, sigmoid_ce_loss, total_loss};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kernel {
    Conv2d,
    TransposedConv2d,
    MaxPool2,
    FullyConnected,
    Relu,
    Sigmoid,
    Concat,
    Rcl,
    SigmoidCe,
    Network,
}

impl Kernel {
    pub const ALL: [Kernel; 10] = [
        Kernel::Conv2d,
        Kernel::TransposedConv2d,
        Kernel::MaxPool2,
        Kernel::FullyConnected,
        Kernel::Relu,
        Kernel::Sigmoid,
        Kernel::Concat,
        Kernel::Rcl,
        Kernel::SigmoidCe,
        Kernel::Network,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Conv2d => "conv2d",
            Kernel::TransposedConv2d => "transposed_conv2d",
            Kernel::MaxPool2 => "max_pool2",
            Kernel::FullyConnected => "fully_connected",
            Kernel::Relu => "relu",
            Kernel::Sigmoid => "sigmoid",
            Kernel::Concat => "concat",
            Kernel::Rcl => "rcl",
            Kernel::SigmoidCe => "sigmoid_ce",
            Kernel::Network => "network",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Kernel::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown kernel `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub kernels: Vec<Kernel>,
    /// Seeds per kernel check.
    pub seeds: u64,
    pub tolerance: f64,
    pub network_tolerance: f64,
    /// Sampled entries per parameter tensor in the network check.
    pub network_probes: usize,
    pub epsilon: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            kernels: Kernel::ALL.to_vec(),
            seeds: 10,
            tolerance: 1e-4,
            network_tolerance: 1e-3,
            network_probes: 10,
            epsilon: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub kernel: Kernel,
    /// Kernel plus variant, e.g. `rcl T=3`.
    pub label: String,
    pub tolerance: f64,
    pub report: GradCheckReport,
    pub elapsed: Duration,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.report.passed
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<24} {} max_rel_error={:.3e} tol={:e} probes={}",
            self.label,
            if self.passed() { "PASS" } else { "FAIL" },
            self.report.max_rel_error,
            self.tolerance,
            self.report.probes
        )?;
        if let Some(reason) = &self.report.failure {
            write!(f, " ({reason})")?;
        }
        Ok(())
    }
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng).expect("valid shape")
}

/// Values bounded away from zero so relu kinks stay out of reach of ε.
fn off_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let v = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::from_vec(shape, v).expect("valid shape")
}

/// Distinct values spaced 0.05 apart in random order: no near-ties.
fn distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - n as f64 * 0.025).collect();
    v.shuffle(rng);
    Tensor::from_vec(shape, v).expect("valid shape")
}

fn gc_config(cfg: &SuiteConfig, seed: u64) -> GradCheckConfig {
    GradCheckConfig {
        epsilon: cfg.epsilon,
        tolerance: cfg.tolerance,
        max_probes: None,
        seed,
    }
}

fn check_conv(seed: u64, gc: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (stride, padding) = [(1, 1), (2, 1), (1, 0)][seed as usize % 3];
    let inputs = [uniform(&[2, 2, 5, 5], &mut rng), uniform(&[3, 2, 3, 3], &mut rng), uniform(&[3], &mut rng)];
    let params = |xs: &[Tensor]| (xs[1].clone(), xs[2].clone());
    grad_check(
        &inputs,
        |xs| {
            let (w, b) = params(xs);
            conv2d(&xs[0], &ConvParams { weights: &w, bias: Some(&b), stride, padding })
        },
        |xs, gy| {
            let g = conv2d_backward(&xs[0], &ConvParams { weights: &xs[1], bias: Some(&xs[2]), stride, padding }, gy)?;
            Ok(vec![g.input.expect("input grad"), g.weights, g.bias])
        },
        gc,
    )
}

fn check_deconv(seed: u64, gc: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, stride) = [(2, 2), (3, 2), (4, 4)][seed as usize % 3];
    let inputs = [uniform(&[2, 3, 3, 3], &mut rng), uniform(&[3, 2, k, k], &mut rng), uniform(&[2], &mut rng)];
    grad_check(
        &inputs,
        |xs| transposed_conv2d(&xs[0], &DeconvParams { weights: &xs[1], bias: Some(&xs[2]), stride }),
        |xs, gy| {
            let g = transposed_conv2d_backward(&xs[0], &DeconvParams { weights: &xs[1], bias: Some(&xs[2]), stride }, gy)?;
            Ok(vec![g.input.expect("input grad"), g.weights, g.bias])
        },
        gc,
    )
}

fn check_pool(seed: u64, gc: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = distinct(&[2, 2, 6, 6], &mut rng);
    grad_check(
        &[x],
        |xs| Ok(max_pool2(&xs[0])?.0),
        |xs, gy| {
            let (_, idx) = max_pool2(&xs[0])?;
            Ok(vec![max_pool2_backward(gy, &idx)?])
        },
        gc,
    )
}

fn check_dense(seed: u64, gc: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = [uniform(&[3, 7], &mut rng), uniform(&[5, 7], &mut rng), uniform(&[5], &mut rng)];
    grad_check(
        &inputs,
        |xs| fully_connected(&xs[0], &xs[1], &xs[2]),
        |xs, gy| {
            let g = fully_connected_backward(&xs[0], &xs[1], &xs[2], gy)?;
            Ok(vec![g.input, g.weights, g.bias])
        },
        gc,
    )
}

fn check_relu(seed: u64, gc: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    grad_check(
        &[off_zero(&[2, 3, 4, 4], &mut rng)],
        |xs| Ok(relu(&xs[0])),
        |xs, gy| Ok(vec![relu_backward(&relu(&xs[0]), gy)?]),
        gc,
    )
}

fn check_sigmoid(seed: u64, gc: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&[2, 3, 4, 4], &mut rng).scale(4.0);
    grad_check(
        &[x],
        |xs| Ok(sigmoid(&xs[0])),
        |xs, gy| Ok(vec![sigmoid_backward(&sigmoid(&xs[0]), gy)?]),
        gc,
    )
}

fn check_concat(seed: u64, gc: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = [1 + seed as usize % 3, 2, 1];
    let inputs: Vec<Tensor> = widths.iter().map(|&c| uniform(&[2, c, 3, 3], &mut rng)).collect();
    grad_check(
        &inputs,
        |xs| concat_many(&xs.iter().collect::<Vec<_>>()),
        |_, gy| split_many(gy, &widths),
        gc,
    )
}

fn check_rcl(seed: u64, timesteps: usize, gc: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = RclConfig::new(2, 2, timesteps);
    let inputs = [
        uniform(&[1, 2, 5, 5], &mut rng),
        uniform(&cfg.feedforward_shape(), &mut rng).scale(0.5),
        uniform(&cfg.recurrent_shape(), &mut rng).scale(0.5),
        uniform(&[2], &mut rng).scale(0.1),
    ];
    grad_check(
        &inputs,
        |xs| Ok(rcl_forward(&xs[0], &RclParams { w_f: &xs[1], w_r: &xs[2], b: &xs[3] }, &cfg)?.output().clone()),
        |xs, gy| {
            let params = RclParams { w_f: &xs[1], w_r: &xs[2], b: &xs[3] };
            let cache = rcl_forward(&xs[0], &params, &cfg)?;
            let g = rcl_backward(&cache, &params, &cfg, gy)?;
            Ok(vec![g.input, g.w_f, g.w_r, g.b])
        },
        gc,
    )
}

fn check_ce(seed: u64, gc: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = uniform(&[2, 1, 4, 4], &mut rng).scale(5.0);
    let y = uniform(&[2, 1, 4, 4], &mut rng).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    grad_check(
        &[z],
        |xs| Tensor::from_vec(&[1], vec![sigmoid_ce_loss(&xs[0], &y)?.0]),
        |xs, gy| Ok(vec![sigmoid_ce_loss(&xs[0], &y)?.1.scale(gy.data()[0])]),
        gc,
    )
}

/// Configuration of the whole-network check: 32×32 input, one eighth of
/// the default widths, one recurrent step, every scale enabled.
pub fn network_check_config() -> NetworkConfig {
    NetworkConfig::new(32, 0.125, 1)
}

/// Sampled central differences of the deep-supervised loss with respect to
/// every parameter tensor of a freshly initialized network.
pub fn network_grad_check(config: &NetworkConfig, seed: u64, probes: usize, epsilon: f64, tolerance: f64) -> Result<GradCheckReport> {
    let mut model = MsdnnModel::<f64>::init(config.clone(), seed)?;
    let data = synth_dataset(2, config.input_size, seed)?;
    let (images, masks) = make_batch::<f64>(&data, &[0, 1])?;
    let trace = model.forward(&images)?;
    let loss = total_loss(&trace, &masks, 1.0)?;
    model.zero_grad();
    model.backward(&trace, &loss.grads)?;

    let loss_with = |path: &str, value: &Tensor| -> Result<Tensor> {
        let mut m = model.clone();
        m.params_mut()[path].value = value.clone();
        let t = m.forward(&images)?;
        Tensor::from_vec(&[1], vec![total_loss(&t, &masks, 1.0)?.total])
    };
    let gc = GradCheckConfig {
        epsilon,
        tolerance,
        max_probes: Some(probes),
        seed,
    };
    let mut reports = Vec::new();
    for (path, p) in model.params() {
        let grad = p.grad.clone();
        let mut r = grad_check(
            std::slice::from_ref(&p.value),
            |xs| loss_with(path, &xs[0]),
            |_, gy| Ok(vec![grad.scale(gy.data()[0])]),
            &gc,
        );
        if let Some(f) = r.failure.take() {
            r.failure = Some(format!("{path}: {f}"));
        } else if !r.passed {
            r.failure = Some(format!("worst parameter `{path}`"));
        }
        reports.push(r);
    }
    Ok(GradCheckReport::merge(reports))
}

fn timed(kernel: Kernel, label: impl Into<String>, tolerance: f64, f: impl FnOnce() -> GradCheckReport) -> CheckResult {
    let start = Instant::now();
    let report = f();
    CheckResult {
        kernel,
        label: label.into(),
        tolerance,
        report,
        elapsed: start.elapsed(),
    }
}

fn over_seeds(cfg: &SuiteConfig, check: impl Fn(u64, &GradCheckConfig) -> GradCheckReport) -> GradCheckReport {
    GradCheckReport::merge((0..cfg.seeds).map(|s| check(s, &gc_config(cfg, s))))
}

/// Run the selected checks in a fixed order.
pub fn run_suite(cfg: &SuiteConfig) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let tol = cfg.tolerance;
    for kernel in Kernel::ALL.into_iter().filter(|k| cfg.kernels.contains(k)) {
        match kernel {
            Kernel::Conv2d => out.push(timed(kernel, "conv2d", tol, || over_seeds(cfg, check_conv))),
            Kernel::TransposedConv2d => out.push(timed(kernel, "transposed_conv2d", tol, || over_seeds(cfg, check_deconv))),
            Kernel::MaxPool2 => out.push(timed(kernel, "max_pool2", tol, || over_seeds(cfg, check_pool))),
            Kernel::FullyConnected => out.push(timed(kernel, "fully_connected", tol, || over_seeds(cfg, check_dense))),
            Kernel::Relu => out.push(timed(kernel, "relu", tol, || over_seeds(cfg, check_relu))),
            Kernel::Sigmoid => out.push(timed(kernel, "sigmoid", tol, || over_seeds(cfg, check_sigmoid))),
            Kernel::Concat => out.push(timed(kernel, "concat", tol, || over_seeds(cfg, check_concat))),
            Kernel::Rcl => {
                for t in [0, 1, 3] {
                    out.push(timed(kernel, format!("rcl T={t}"), tol, || {
                        over_seeds(cfg, |s, gc| check_rcl(s, t, gc))
                    }));
                }
            }
            Kernel::SigmoidCe => out.push(timed(kernel, "sigmoid_ce", tol, || over_seeds(cfg, check_ce))),
            Kernel::Network => out.push(timed(kernel, "network", cfg.network_tolerance, || {
                network_grad_check(&network_check_config(), 0, cfg.network_probes, cfg.epsilon, cfg.network_tolerance)
                    .unwrap_or_else(|e| GradCheckReport::failed(e.to_string()))
            })),
        }
    }
    out
}
