#![allow(dead_code)]

use msdnn::metrics::{GroundTruth, SaliencyMap};
use msdnn::nnops::{conv2d, conv2d_backward, relu, relu_backward, ConvParams};
use msdnn::rcl::{rcl_forward, RclConfig, RclParams};
use msdnn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng).unwrap()
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---- saliency metric oracles ----

pub fn random_pair(rng: &mut ChaCha8Rng, h: usize, w: usize, quantized: bool) -> (SaliencyMap, GroundTruth) {
    let values: Vec<f64> = (0..h * w)
        .map(|_| {
            let v: f64 = rng.gen();
            if quantized { (v * 255.0).round() / 255.0 } else { v }
        })
        .collect();
    let mut mask: Vec<f64> = (0..h * w).map(|_| if rng.gen_bool(0.35) { 1.0 } else { 0.0 }).collect();
    // keep both classes present
    mask[0] = 1.0;
    mask[1] = 0.0;
    (
        SaliencyMap::new(&Tensor::from_vec(&[h, w], values).unwrap(), "m").unwrap(),
        GroundTruth::new(&Tensor::from_vec(&[h, w], mask).unwrap(), "g").unwrap(),
    )
}

pub fn counts(pred: &[bool], gt: &[f64]) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        let g = gt[i] == 1.0;
        if pred[i] && g {
            tp += 1.0;
        } else if pred[i] {
            fp += 1.0;
        } else if g {
            fneg += 1.0;
        }
    }
    (tp, fp, fneg)
}

pub fn oracle_pr(map: &[f64], gt: &[f64], t: f64) -> (f64, f64) {
    let pred: Vec<bool> = map.iter().map(|&v| v > t).collect();
    let (tp, fp, fneg) = counts(&pred, gt);
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
    (p, r)
}

/// (threshold, P, R, F) with β² = 0.3 and threshold `min(2·mean, 1)`.
pub fn oracle_adaptive(map: &[f64], gt: &[f64]) -> (f64, f64, f64, f64) {
    let t = (2.0 * map.iter().sum::<f64>() / map.len() as f64).min(1.0);
    let (p, r) = oracle_pr(map, gt, t);
    let f = if p == 0.0 && r == 0.0 { 0.0 } else { 1.3 * p * r / (0.3 * p + r) };
    (t, p, r, f)
}

pub fn oracle_mae(map: &[f64], gt: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..map.len() {
        s += (map[i] - gt[i]).abs();
    }
    s / map.len() as f64
}

pub fn oracle_pairwise_auc(map: &[f64], gt: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..map.len() {
        for j in 0..map.len() {
            if gt[i] == 1.0 && gt[j] == 0.0 {
                pairs += 1.0;
                if map[i] > map[j] {
                    wins += 1.0;
                } else if map[i] == map[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// The 256-level threshold sweep with trapezoids; exact for 8-bit maps.
pub fn oracle_sweep_auc(map: &[f64], gt: &[f64]) -> f64 {
    let pos = gt.iter().filter(|&&g| g == 1.0).count() as f64;
    let neg = gt.len() as f64 - pos;
    let mut pts = vec![(1.0, 1.0)];
    for level in 0..=255 {
        let pred: Vec<bool> = map.iter().map(|&v| v > level as f64 / 255.0).collect();
        let (tp, fp, _) = counts(&pred, gt);
        pts.push((fp / neg, tp / pos));
    }
    pts.windows(2).map(|w| (w[0].0 - w[1].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

// ---- recurrent layer oracles ----

fn conv(x: &Tensor, w: &Tensor, b: Option<&Tensor>, pad: usize) -> Tensor {
    conv2d(x, &ConvParams { weights: w, bias: b, stride: 1, padding: pad }).unwrap()
}

/// Explicit chain of convolutions and ReLUs with per-step weight copies:
/// `x0 = relu(conv(u, wf[0]) + b[0])`,
/// `x_t = relu(conv(u, wf[t]) + b[t] + conv(x_{t-1}, wr[t-1]))`.
pub fn untied_chain(u: &Tensor, wf: &[Tensor], wr: &[Tensor], b: &[Tensor], pad: usize) -> Vec<Tensor> {
    let mut states = vec![relu(&conv(u, &wf[0], Some(&b[0]), pad))];
    for t in 1..wf.len() {
        let ff = conv(u, &wf[t], Some(&b[t]), pad);
        let rec = conv(&states[t - 1], &wr[t - 1], None, pad);
        states.push(relu(&ff.add(&rec).unwrap()));
    }
    states
}

pub struct UntiedGrads {
    pub input: Tensor,
    pub wf: Vec<Tensor>,
    pub wr: Vec<Tensor>,
    pub b: Vec<Tensor>,
}

/// Backpropagate `gy` (gradient of the last state) through [`untied_chain`],
/// one gradient per weight copy.
pub fn untied_backward(u: &Tensor, wf: &[Tensor], wr: &[Tensor], b: &[Tensor], pad: usize, gy: &Tensor) -> UntiedGrads {
    let states = untied_chain(u, wf, wr, b, pad);
    let t_max = wf.len() - 1;
    let mut g_state = gy.clone();
    let mut gi = u.zeros_like();
    let mut gwf = vec![Tensor::zeros(&[1]).unwrap(); wf.len()];
    let mut gwr = vec![Tensor::zeros(&[1]).unwrap(); wr.len()];
    let mut gb = vec![Tensor::zeros(&[1]).unwrap(); b.len()];
    for t in (0..=t_max).rev() {
        let gz = relu_backward(&states[t], &g_state).unwrap();
        let ff = conv2d_backward(u, &ConvParams { weights: &wf[t], bias: Some(&b[t]), stride: 1, padding: pad }, &gz).unwrap();
        gi = gi.add(ff.input.as_ref().unwrap()).unwrap();
        gwf[t] = ff.weights;
        gb[t] = ff.bias;
        if t > 0 {
            let rec = conv2d_backward(&states[t - 1], &ConvParams { weights: &wr[t - 1], bias: None, stride: 1, padding: pad }, &gz)
                .unwrap();
            gwr[t - 1] = rec.weights;
            g_state = rec.input.unwrap();
        }
    }
    UntiedGrads { input: gi, wf: gwf, wr: gwr, b: gb }
}

/// Width of the bounding box of output pixels that change when one input
/// pixel at the centre is perturbed, for a single-channel 3×3 RCL with
/// positive weights.
pub fn changed_region_diameter(timesteps: usize, size: usize) -> usize {
    let cfg = RclConfig::new(1, 1, timesteps);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let wf = Tensor::uniform(&cfg.feedforward_shape(), 0.1, 0.3, &mut rng).unwrap();
    let wr = Tensor::uniform(&cfg.recurrent_shape(), 0.1, 0.3, &mut rng).unwrap();
    let b = Tensor::new(&[1], 0.1).unwrap();
    let params = RclParams { w_f: &wf, w_r: &wr, b: &b };
    let u = Tensor::uniform(&[1, 1, size, size], 0.2, 0.8, &mut rng).unwrap();
    let mut v = u.clone();
    let c = size / 2;
    v.data_mut()[c * size + c] += 0.5;
    let a = rcl_forward(&u, &params, &cfg).unwrap();
    let z = rcl_forward(&v, &params, &cfg).unwrap();
    let cols: Vec<usize> = (0..size * size)
        .filter(|&i| a.output().data()[i] != z.output().data()[i])
        .map(|i| i % size)
        .collect();
    match (cols.iter().min(), cols.iter().max()) {
        (Some(lo), Some(hi)) => hi - lo + 1,
        _ => 0,
    }
}
