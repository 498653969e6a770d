//! Sigmoid cross-entropy, SGD with momentum and weight decay, and the
//! training loop.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{self, ForwardTrace, LogitGrads, MsdnnModel};
use crate::scalar::Scalar;
use crate::tensor::{compensated_sum, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
    /// Weight of the per-head losses; mirrors the network config.
    pub deep_supervision_weight: f64,
    /// Heads-only warm-up iterations before joint training (0 = one stage).
    pub warmup_iterations: usize,
    /// Multiply the learning rate by `gamma` every `every` iterations.
    pub lr_step: Option<LrStep>,
    /// Stop as soon as the final-map loss of a batch falls below this.
    pub target_loss: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrStep {
    pub every: usize,
    pub gamma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 8,
            max_iterations: 1000,
            seed: 0,
            checkpoint_every: 0,
            deep_supervision_weight: 1.0,
            warmup_iterations: 0,
            lr_step: None,
            target_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.deep_supervision_weight.is_finite() && self.deep_supervision_weight >= 0.0) {
            return Err(Error::Config("deep_supervision_weight must be non-negative".into()));
        }
        if let Some(step) = self.lr_step {
            if step.every == 0 || !(step.gamma.is_finite() && step.gamma > 0.0) {
                return Err(Error::Config("lr_step needs every >= 1 and a positive gamma".into()));
            }
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        match self.lr_step {
            Some(LrStep { every, gamma }) => self.learning_rate * gamma.powi((iteration / every.max(1)) as i32),
            _ => self.learning_rate,
        }
    }
}

/// Mean sigmoid cross-entropy over all pixels and its gradient:
/// `max(z, 0) - z·y + ln(1 + e^{-|z|})`, gradient `(σ(z) - y) / count`.
pub fn sigmoid_ce_loss<S: Scalar>(logits: &Tensor<S>, target: &Tensor<S>) -> Result<(f64, Tensor<S>)> {
    logits.same_shape(target, "sigmoid_ce_loss")?;
    if let Some(bad) = target.data().iter().find(|&&y| y != S::zero() && y != S::one()) {
        return Err(Error::Input(format!("target must be binary, found {bad}")));
    }
    let count = logits.len() as f64;
    let inv = S::from_real(1.0 / count);
    let mut grad = Vec::with_capacity(logits.len());
    let terms = logits.data().iter().zip(target.data()).map(|(&z, &y)| {
        let (zf, yf) = (z.to_real(), y.to_real());
        let sig = crate::nnops::sigmoid_scalar(z);
        grad.push((sig - y) * inv);
        zf.max(0.0) - zf * yf + (-zf.abs()).exp().ln_1p()
    });
    let total = compensated_sum(terms.collect::<Vec<f64>>());
    Ok((total / count, Tensor::raw(logits.shape().to_vec(), grad)))
}

#[derive(Clone, Debug)]
pub struct LossBreakdown<S = f64> {
    /// `final + λ · aux`.
    pub total: f64,
    pub final_loss: f64,
    /// Sum of the per-head losses (unweighted).
    pub aux_loss: f64,
    pub grads: LogitGrads<S>,
}

/// Final-map loss weighted by `final_weight` plus `λ` times each enabled
/// head's loss.
pub fn total_loss_weighted<S: Scalar>(
    trace: &ForwardTrace<S>,
    target: &Tensor<S>,
    final_weight: f64,
    lambda: f64,
) -> Result<LossBreakdown<S>> {
    let (final_loss, g) = sigmoid_ce_loss(trace.final_logit(), target)?;
    let final_grad = g.scale(S::from_real(final_weight));
    let mut aux = Vec::new();
    let mut heads = BTreeMap::new();
    for &scale in trace.enabled_scales() {
        let logit = trace.head_logit(scale).expect("enabled head present");
        let (l, g) = sigmoid_ce_loss(logit, target)?;
        aux.push(l);
        if lambda != 0.0 {
            heads.insert(scale, g.scale(S::from_real(lambda)));
        }
    }
    let aux_loss = compensated_sum(aux);
    Ok(LossBreakdown {
        total: final_weight * final_loss + lambda * aux_loss,
        final_loss,
        aux_loss,
        grads: LogitGrads {
            final_logit: final_grad,
            heads,
        },
    })
}

/// `L = CE(final) + λ · Σ CE(head_i)`.
pub fn total_loss<S: Scalar>(trace: &ForwardTrace<S>, target: &Tensor<S>, lambda: f64) -> Result<LossBreakdown<S>> {
    total_loss_weighted(trace, target, 1.0, lambda)
}

/// One velocity tensor per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<S = f64> {
    pub velocity: IndexMap<String, Tensor<S>>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(model: &MsdnnModel<S>) -> Self {
        OptimizerState {
            velocity: model
                .params()
                .iter()
                .map(|(k, p)| (k.clone(), p.value.zeros_like()))
                .collect(),
        }
    }
}

/// `g = grad + wd·w; v = μ·v + g; w -= lr·v`, then gradients are zeroed.
pub fn sgd_step<S: Scalar>(model: &mut MsdnnModel<S>, opt: &mut OptimizerState<S>, cfg: &TrainConfig, learning_rate: f64) -> Result<()> {
    let (lr, mu, wd) = (
        S::from_real(learning_rate),
        S::from_real(cfg.momentum),
        S::from_real(cfg.weight_decay),
    );
    for (path, p) in model.params_mut().iter_mut() {
        let v = opt
            .velocity
            .get_mut(path)
            .ok_or_else(|| Error::Consistency(format!("optimizer has no state for `{path}`")))?;
        v.same_shape(&p.value, "optimizer velocity")?;
        for ((w, g), vel) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(p.grad.data_mut())
            .zip(v.data_mut())
        {
            let step = *g + wd * *w;
            *vel = mu * *vel + step;
            *w = *w - lr * *vel;
            *g = S::zero();
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub loss: f64,
    pub final_loss: f64,
    pub aux_loss: f64,
    pub seconds: f64,
}

pub const LOSS_LOG_HEADER: &str = "iteration,loss,final_loss,aux_loss,seconds";

pub fn loss_log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from(LOSS_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:.3}",
            r.iteration, r.loss, r.final_loss, r.aux_loss, r.seconds
        );
    }
    out
}

/// Images `[B, 3, S, S]` and masks `[B, 1, S, S]` of the selected samples.
pub fn make_batch<S: Scalar>(dataset: &[Sample], indices: &[usize]) -> Result<(Tensor<S>, Tensor<S>)> {
    let mut images = Vec::with_capacity(indices.len());
    let mut masks = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = &dataset[i];
        images.push(s.image.cast::<S>());
        masks.push(s.mask.cast::<S>());
    }
    Ok((Tensor::stack(&images)?, Tensor::stack(&masks)?))
}

/// Endless stream of sample indices: seeded reshuffle every epoch.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut s = BatchSampler {
            order: (0..n).collect(),
            cursor: 0,
            rng,
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Where [`train_loop`] writes checkpoints and how it reports progress.
#[derive(Default)]
pub struct TrainOutputs<'a> {
    pub checkpoint_dir: Option<PathBuf>,
    pub on_iteration: Option<Box<dyn FnMut(&LogRow) + 'a>>,
}

/// Forward, loss, backward and SGD step for every iteration. Returns the
/// loss log; each row's losses are measured on that iteration's batch
/// before its update.
pub fn train_loop<S: Scalar>(
    model: &mut MsdnnModel<S>,
    dataset: &[Sample],
    cfg: &TrainConfig,
    mut outputs: TrainOutputs<'_>,
) -> Result<Vec<LogRow>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let size = model.config().input_size;
    if let Some(bad) = dataset.iter().find(|s| s.image.shape() != [3, size, size]) {
        return Err(Error::Input(format!(
            "sample `{}` is {:?}, network expects [3, {size}, {size}]",
            bad.id,
            bad.image.shape()
        )));
    }
    let mut opt = OptimizerState::new(model);
    let mut sampler = BatchSampler::new(dataset.len(), cfg.seed);
    let start = Instant::now();
    let mut log = Vec::with_capacity(cfg.max_iterations);
    model.zero_grad();

    for iteration in 0..cfg.max_iterations {
        let idx = sampler.next_batch(cfg.batch_size);
        let (images, masks) = make_batch::<S>(dataset, &idx)?;
        let trace = model.forward(&images)?;
        let warmup = iteration < cfg.warmup_iterations;
        let (final_weight, lambda) = if warmup {
            (0.0, cfg.deep_supervision_weight.max(1.0))
        } else {
            (1.0, cfg.deep_supervision_weight)
        };
        let loss = total_loss_weighted(&trace, &masks, final_weight, lambda)?;
        let row = LogRow {
            iteration,
            loss: loss.total,
            final_loss: loss.final_loss,
            aux_loss: loss.aux_loss,
            seconds: start.elapsed().as_secs_f64(),
        };
        if let Some(cb) = outputs.on_iteration.as_mut() {
            cb(&row);
        }
        log.push(row);
        if !warmup && cfg.target_loss.is_some_and(|t| loss.final_loss < t) {
            break;
        }

        model.backward(&trace, &loss.grads)?;
        sgd_step(model, &mut opt, cfg, cfg.learning_rate_at(iteration))?;

        if let Some(dir) = &outputs.checkpoint_dir {
            if cfg.checkpoint_every > 0 && (iteration + 1) % cfg.checkpoint_every == 0 {
                model::save(model, checkpoint_path(dir, iteration + 1))?;
            }
        }
    }
    if let Some(dir) = &outputs.checkpoint_dir {
        model::save(model, dir.join("final.msdnn"))?;
    }
    Ok(log)
}

pub fn checkpoint_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(format!("iter_{iteration:06}.msdnn"))
}
