//! Forward and backward passes through the whole network.
//!
//! Scale indices follow the decoder levels: `X_i` is the output of
//! recurrent block `i` (at `S / 2^i`), `Fm_i` the decoder feature map at the
//! same resolution, and head `i` upsamples `Fm_i` by `2^i` back to `S × S`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nnops::{
    concat_channels, concat_many, conv2d, conv2d_backward, conv2d_backward_with, fully_connected,
    fully_connected_backward, max_pool2, max_pool2_backward, relu, relu_backward, sigmoid, sigmoid_backward,
    split_channels, split_many, transposed_conv2d, transposed_conv2d_backward, ConvParams, DeconvParams,
    PoolIndices,
};
use crate::rcl::{rcl_backward, rcl_forward, RclCache, RclParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{MsdnnModel, RECURRENT_BLOCKS};

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderTrace<S = f64> {
    pub image: Tensor<S>,
    /// Post-ReLU outputs of the two stem convolutions.
    pub conv1: [Tensor<S>; 2],
    pub pools: Vec<PoolIndices>,
    pub rcl: Vec<RclCache<S>>,
    /// Post-ReLU fully connected activations `[N, fc_nodes]`.
    pub fc: Tensor<S>,
    pub fm5: Tensor<S>,
}

impl<S> EncoderTrace<S> {
    /// `X_i`, the output of recurrent block `i` (1-based).
    pub fn x(&self, i: usize) -> &Tensor<S> {
        self.rcl[i - 1].output()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DecoderTrace<S = f64> {
    /// Fusion-conv inputs `Concat(Up(Fm_{i+1}), X_i)` (or `Concat(Fm_5, X_4)`).
    pub concat: BTreeMap<usize, Tensor<S>>,
    /// Upsampled `Fm_{i+1}` for levels 1..=3.
    pub upsampled: BTreeMap<usize, Tensor<S>>,
    pub fm: BTreeMap<usize, Tensor<S>>,
    pub head_logits: BTreeMap<usize, Tensor<S>>,
    pub head_maps: BTreeMap<usize, Tensor<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FcmTrace<S = f64> {
    pub input: Tensor<S>,
    pub hidden: [Tensor<S>; 2],
    pub logit: Tensor<S>,
    pub map: Tensor<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<S = f64> {
    pub encoder: EncoderTrace<S>,
    pub decoder: DecoderTrace<S>,
    pub fcm: FcmTrace<S>,
    scales: Vec<usize>,
}

impl<S: Scalar> ForwardTrace<S> {
    pub fn final_logit(&self) -> &Tensor<S> {
        &self.fcm.logit
    }

    pub fn final_map(&self) -> &Tensor<S> {
        &self.fcm.map
    }

    /// `Fm_i` for `i` in 1..=5 (levels below the finest enabled scale are
    /// not computed).
    pub fn fm(&self, i: usize) -> Option<&Tensor<S>> {
        if i == 5 {
            Some(&self.encoder.fm5)
        } else {
            self.decoder.fm.get(&i)
        }
    }

    pub fn head_logit(&self, i: usize) -> Option<&Tensor<S>> {
        self.decoder.head_logits.get(&i)
    }

    pub fn head_map(&self, i: usize) -> Option<&Tensor<S>> {
        self.decoder.head_maps.get(&i)
    }

    pub fn enabled_scales(&self) -> &[usize] {
        &self.scales
    }
}

/// Loss gradients with respect to the final logit and each head logit.
#[derive(Clone, Debug)]
pub struct LogitGrads<S = f64> {
    pub final_logit: Tensor<S>,
    pub heads: BTreeMap<usize, Tensor<S>>,
}

fn conv<'a, S>(w: &'a Tensor<S>, b: &'a Tensor<S>) -> ConvParams<'a, S> {
    ConvParams {
        weights: w,
        bias: Some(b),
        stride: 1,
        padding: 1,
    }
}

fn deconv<'a, S>(w: &'a Tensor<S>, b: &'a Tensor<S>, stride: usize) -> DeconvParams<'a, S> {
    DeconvParams {
        weights: w,
        bias: Some(b),
        stride,
    }
}

fn take_input<S>(g: crate::nnops::ConvGrads<S>) -> Tensor<S> {
    g.input.expect("input gradient requested")
}

fn add_into<S: Scalar>(slot: &mut BTreeMap<usize, Tensor<S>>, key: usize, g: Tensor<S>) -> Result<()> {
    match slot.get_mut(&key) {
        Some(acc) => acc.accumulate(&g),
        None => {
            slot.insert(key, g);
            Ok(())
        }
    }
}

impl<S: Scalar> MsdnnModel<S> {
    fn conv_params(&self, layer: &str) -> Result<ConvParams<'_, S>> {
        Ok(conv(
            self.param(&format!("{layer}.weight"))?,
            self.param(&format!("{layer}.bias"))?,
        ))
    }

    fn deconv_params(&self, layer: &str, stride: usize) -> Result<DeconvParams<'_, S>> {
        Ok(deconv(
            self.param(&format!("{layer}.weight"))?,
            self.param(&format!("{layer}.bias"))?,
            stride,
        ))
    }

    fn rcl_params(&self, block: usize) -> Result<RclParams<'_, S>> {
        Ok(RclParams {
            w_f: self.param(&format!("encoder.rcl{block}.w_f"))?,
            w_r: self.param(&format!("encoder.rcl{block}.w_r"))?,
            b: self.param(&format!("encoder.rcl{block}.b"))?,
        })
    }

    fn accumulate_layer(&mut self, layer: &str, weights: &Tensor<S>, bias: &Tensor<S>) -> Result<()> {
        self.accumulate(&format!("{layer}.weight"), weights)?;
        self.accumulate(&format!("{layer}.bias"), bias)
    }

    /// Stem, four pool+RCL blocks, fully connected layer, and the lift of
    /// the reshaped fc vector to `Fm_5`.
    pub fn encoder_forward(&self, image: &Tensor<S>) -> Result<EncoderTrace<S>> {
        let cfg = &self.config;
        let (n, c, h, w) = image.dims4()?;
        if c != 3 || h != cfg.input_size || w != cfg.input_size {
            return Err(Error::shape(format!(
                "expected images [N, 3, {s}, {s}], got {:?}",
                image.shape(),
                s = cfg.input_size
            )));
        }
        let c1a = relu(&conv2d(image, &self.conv_params("encoder.conv1.0")?)?);
        let c1b = relu(&conv2d(&c1a, &self.conv_params("encoder.conv1.1")?)?);

        let mut pools = Vec::with_capacity(RECURRENT_BLOCKS);
        let mut caches: Vec<RclCache<S>> = Vec::with_capacity(RECURRENT_BLOCKS);
        for block in 1..=RECURRENT_BLOCKS {
            let prev = caches.last().map(|c| c.output()).unwrap_or(&c1b);
            let (pooled, idx) = max_pool2(prev)?;
            let cache = rcl_forward(&pooled, &self.rcl_params(block)?, &cfg.rcl_config(block))?;
            pools.push(idx);
            caches.push(cache);
        }

        let x4 = caches[RECURRENT_BLOCKS - 1].output();
        let flat = x4.reshape(&[n, x4.len() / n])?;
        let fc = relu(&fully_connected(
            &flat,
            self.param("encoder.fc.weight")?,
            self.param("encoder.fc.bias")?,
        )?);
        let s16 = cfg.coarse_size();
        let fc_image = fc.reshape(&[n, cfg.fc_width(), s16, s16])?;
        let fm5 = conv2d(&fc_image, &self.conv_params("encoder.fm5")?)?;
        Ok(EncoderTrace {
            image: image.clone(),
            conv1: [c1a, c1b],
            pools,
            rcl: caches,
            fc,
            fm5,
        })
    }

    /// Hierarchical feature maps `Fm_4..Fm_k` (k = finest enabled scale) and
    /// the enabled saliency heads.
    pub fn decoder_forward(&self, enc: &EncoderTrace<S>) -> Result<DecoderTrace<S>> {
        let cfg = &self.config;
        let mut tr = DecoderTrace::default();

        let cat4 = concat_channels(&enc.fm5, enc.x(4))?;
        let fm4 = relu(&conv2d(&cat4, &self.conv_params("decoder.fm4")?)?);
        tr.concat.insert(4, cat4);
        tr.fm.insert(4, fm4);
        for level in (cfg.finest_scale()..=3).rev() {
            let up = transposed_conv2d(&tr.fm[&(level + 1)], &self.deconv_params(&format!("decoder.up{level}"), 2)?)?;
            let cat = concat_channels(&up, enc.x(level))?;
            let fm = relu(&conv2d(&cat, &self.conv_params(&format!("decoder.fm{level}"))?)?);
            tr.upsampled.insert(level, up);
            tr.concat.insert(level, cat);
            tr.fm.insert(level, fm);
        }

        for &scale in &cfg.enabled_scales {
            let logit = transposed_conv2d(&tr.fm[&scale], &self.deconv_params(&format!("head.sm{scale}"), 1 << scale)?)?;
            let s = cfg.input_size;
            if logit.shape()[2..] != [s, s] {
                return Err(Error::shape(format!(
                    "head {scale} produced {:?}, expected {s}x{s}",
                    logit.shape()
                )));
            }
            tr.head_maps.insert(scale, sigmoid(&logit));
            tr.head_logits.insert(scale, logit);
        }
        Ok(tr)
    }

    /// Fusion module over the enabled head maps, given in ascending scale
    /// order.
    pub fn fcm_forward(&self, maps: &[&Tensor<S>]) -> Result<FcmTrace<S>> {
        if maps.len() != self.config.enabled_scales.len() {
            return Err(Error::shape(format!(
                "fusion module expects {} maps, got {}",
                self.config.enabled_scales.len(),
                maps.len()
            )));
        }
        let s = self.config.input_size;
        for m in maps {
            let (_, c, h, w) = m.dims4()?;
            if (c, h, w) != (1, s, s) {
                return Err(Error::shape(format!("fusion input {:?} is not [N, 1, {s}, {s}]", m.shape())));
            }
        }
        let input = concat_many(maps)?;
        let h1 = relu(&conv2d(&input, &self.conv_params("fcm.conv1")?)?);
        let h2 = relu(&conv2d(&h1, &self.conv_params("fcm.conv2")?)?);
        let logit = conv2d(&h2, &self.conv_params("fcm.conv3")?)?;
        let map = sigmoid(&logit);
        Ok(FcmTrace {
            input,
            hidden: [h1, h2],
            logit,
            map,
        })
    }

    pub fn forward(&self, image: &Tensor<S>) -> Result<ForwardTrace<S>> {
        let encoder = self.encoder_forward(image)?;
        let decoder = self.decoder_forward(&encoder)?;
        let maps: Vec<&Tensor<S>> = self.config.enabled_scales.iter().map(|s| &decoder.head_maps[s]).collect();
        let fcm = self.fcm_forward(&maps)?;
        Ok(ForwardTrace {
            encoder,
            decoder,
            fcm,
            scales: self.config.enabled_scales.clone(),
        })
    }

    /// Final saliency map `[N, 1, S, S]`.
    pub fn predict(&self, image: &Tensor<S>) -> Result<Tensor<S>> {
        Ok(self.forward(image)?.fcm.map)
    }

    /// Backpropagate logit gradients through the whole network, adding
    /// parameter gradients into the gradient slots.
    pub fn backward(&mut self, trace: &ForwardTrace<S>, grads: &LogitGrads<S>) -> Result<()> {
        self.check_trace(trace)?;
        trace.fcm.logit.same_shape(&grads.final_logit, "final logit gradient")?;
        for (scale, g) in &grads.heads {
            let logit = trace
                .decoder
                .head_logits
                .get(scale)
                .ok_or_else(|| Error::Consistency(format!("gradient given for disabled head {scale}")))?;
            logit.same_shape(g, "head logit gradient")?;
        }

        let map_grads = self.fcm_backward(&trace.fcm, &grads.final_logit)?;
        let mut head_grads = BTreeMap::new();
        for (&scale, g_map) in self.config.enabled_scales.clone().iter().zip(map_grads) {
            let mut g = sigmoid_backward(&trace.decoder.head_maps[&scale], &g_map)?;
            if let Some(direct) = grads.heads.get(&scale) {
                g.accumulate(direct)?;
            }
            head_grads.insert(scale, g);
        }
        let (grad_x, grad_fm5) = self.decoder_backward(&trace.decoder, &trace.encoder, &head_grads)?;
        self.encoder_backward(&trace.encoder, grad_x, &grad_fm5)
    }

    fn check_trace(&self, trace: &ForwardTrace<S>) -> Result<()> {
        if trace.scales != self.config.enabled_scales {
            return Err(Error::Consistency(format!(
                "trace was produced with scales {:?}, model has {:?}",
                trace.scales, self.config.enabled_scales
            )));
        }
        if trace.encoder.rcl.len() != RECURRENT_BLOCKS
            || trace.encoder.rcl[0].states.len() != self.config.timesteps + 1
            || trace.encoder.image.shape()[2] != self.config.input_size
            || trace.encoder.fc.shape()[1] != self.config.fc_nodes
            || trace.encoder.conv1[0].shape()[1] != self.config.conv1_width()
            || trace.fcm.hidden[1].shape()[1] != self.config.fcm_widths()[1]
        {
            return Err(Error::Consistency("trace does not match this model's configuration".into()));
        }
        Ok(())
    }

    /// Gradients with respect to each fusion input map.
    fn fcm_backward(&mut self, tr: &FcmTrace<S>, grad_logit: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
        let g3 = conv2d_backward(&tr.hidden[1], &self.conv_params("fcm.conv3")?, grad_logit)?;
        self.accumulate_layer("fcm.conv3", &g3.weights, &g3.bias)?;
        let g = relu_backward(&tr.hidden[1], &take_input(g3))?;
        let g2 = conv2d_backward(&tr.hidden[0], &self.conv_params("fcm.conv2")?, &g)?;
        self.accumulate_layer("fcm.conv2", &g2.weights, &g2.bias)?;
        let g = relu_backward(&tr.hidden[0], &take_input(g2))?;
        let g1 = conv2d_backward(&tr.input, &self.conv_params("fcm.conv1")?, &g)?;
        self.accumulate_layer("fcm.conv1", &g1.weights, &g1.bias)?;
        let widths = vec![1; self.config.enabled_scales.len()];
        split_many(&take_input(g1), &widths)
    }

    /// Returns gradients for each skip input `X_i` used and for `Fm_5`.
    fn decoder_backward(
        &mut self,
        tr: &DecoderTrace<S>,
        enc: &EncoderTrace<S>,
        head_grads: &BTreeMap<usize, Tensor<S>>,
    ) -> Result<(BTreeMap<usize, Tensor<S>>, Tensor<S>)> {
        let fm_width = self.config.fm_width();
        let mut grad_fm: BTreeMap<usize, Tensor<S>> = BTreeMap::new();
        for (&scale, g) in head_grads {
            let layer = format!("head.sm{scale}");
            let gh = transposed_conv2d_backward(&tr.fm[&scale], &self.deconv_params(&layer, 1 << scale)?, g)?;
            self.accumulate_layer(&layer, &gh.weights, &gh.bias)?;
            add_into(&mut grad_fm, scale, take_input(gh))?;
        }

        let mut grad_x = BTreeMap::new();
        for level in self.config.finest_scale()..=3 {
            let g_fm = grad_fm
                .remove(&level)
                .ok_or_else(|| Error::Consistency(format!("no gradient reached Fm_{level}")))?;
            let g = relu_backward(&tr.fm[&level], &g_fm)?;
            let layer = format!("decoder.fm{level}");
            let gc = conv2d_backward(&tr.concat[&level], &self.conv_params(&layer)?, &g)?;
            self.accumulate_layer(&layer, &gc.weights, &gc.bias)?;
            let (g_up, g_skip) = split_channels(&take_input(gc), fm_width)?;
            grad_x.insert(level, g_skip);

            let layer = format!("decoder.up{level}");
            let gu = transposed_conv2d_backward(&tr.fm[&(level + 1)], &self.deconv_params(&layer, 2)?, &g_up)?;
            self.accumulate_layer(&layer, &gu.weights, &gu.bias)?;
            add_into(&mut grad_fm, level + 1, take_input(gu))?;
        }

        let g_fm4 = grad_fm
            .remove(&4)
            .ok_or_else(|| Error::Consistency("no gradient reached Fm_4".into()))?;
        let g = relu_backward(&tr.fm[&4], &g_fm4)?;
        let gc = conv2d_backward(&tr.concat[&4], &self.conv_params("decoder.fm4")?, &g)?;
        self.accumulate_layer("decoder.fm4", &gc.weights, &gc.bias)?;
        let (g_fm5, g_x4) = split_channels(&take_input(gc), fm_width)?;
        debug_assert!(enc.fm5.shape() == g_fm5.shape());
        grad_x.insert(4, g_x4);
        Ok((grad_x, g_fm5))
    }

    fn encoder_backward(
        &mut self,
        enc: &EncoderTrace<S>,
        mut grad_x: BTreeMap<usize, Tensor<S>>,
        grad_fm5: &Tensor<S>,
    ) -> Result<()> {
        let cfg = self.config.clone();
        let n = enc.image.shape()[0];
        let s16 = cfg.coarse_size();
        let fc_image = enc.fc.reshape(&[n, cfg.fc_width(), s16, s16])?;
        let g5 = conv2d_backward(&fc_image, &self.conv_params("encoder.fm5")?, grad_fm5)?;
        self.accumulate_layer("encoder.fm5", &g5.weights, &g5.bias)?;
        let g_fc = relu_backward(&enc.fc, &take_input(g5).into_reshaped(enc.fc.shape())?)?;

        let x4 = enc.x(4);
        let flat = x4.reshape(&[n, x4.len() / n])?;
        let gd = fully_connected_backward(
            &flat,
            self.param("encoder.fc.weight")?,
            self.param("encoder.fc.bias")?,
            &g_fc,
        )?;
        self.accumulate("encoder.fc.weight", &gd.weights)?;
        self.accumulate("encoder.fc.bias", &gd.bias)?;
        add_into(&mut grad_x, 4, gd.input.into_reshaped(x4.shape())?)?;

        let mut grad_stem = None;
        for block in (1..=RECURRENT_BLOCKS).rev() {
            let g_out = grad_x
                .remove(&block)
                .ok_or_else(|| Error::Consistency(format!("no gradient reached X_{block}")))?;
            let rcfg = cfg.rcl_config(block);
            let gr = rcl_backward(&enc.rcl[block - 1], &self.rcl_params(block)?, &rcfg, &g_out)?;
            self.accumulate(&format!("encoder.rcl{block}.w_f"), &gr.w_f)?;
            self.accumulate(&format!("encoder.rcl{block}.w_r"), &gr.w_r)?;
            self.accumulate(&format!("encoder.rcl{block}.b"), &gr.b)?;
            let g_prev = max_pool2_backward(&gr.input, &enc.pools[block - 1])?;
            if block > 1 {
                add_into(&mut grad_x, block - 1, g_prev)?;
            } else {
                grad_stem = Some(g_prev);
            }
        }

        let g = relu_backward(&enc.conv1[1], &grad_stem.expect("block 1 visited"))?;
        let gb = conv2d_backward(&enc.conv1[0], &self.conv_params("encoder.conv1.1")?, &g)?;
        self.accumulate_layer("encoder.conv1.1", &gb.weights, &gb.bias)?;
        let g = relu_backward(&enc.conv1[0], &take_input(gb))?;
        let ga = conv2d_backward_with(&enc.image, &self.conv_params("encoder.conv1.0")?, &g, false)?;
        self.accumulate_layer("encoder.conv1.0", &ga.weights, &ga.bias)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image(n: usize, s: usize, seed: u64) -> Tensor {
        Tensor::uniform(&[n, 3, s, s], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn shapes_at_desk_scale() {
        for s in [32, 64] {
            let cfg = NetworkConfig::new(s, 0.125, 1);
            let m = MsdnnModel::<f64>::init(cfg.clone(), 3).unwrap();
            let tr = m.forward(&image(2, s, 1)).unwrap();
            let c = s / 16;
            assert_eq!(tr.encoder.x(4).shape(), &[2, cfg.rcl_width(), c, c]);
            assert_eq!(tr.fm(5).unwrap().shape(), &[2, cfg.fm_width(), c, c]);
            for i in 1..=4 {
                assert_eq!(tr.fm(i).unwrap().shape()[2], s >> i);
                assert_eq!(tr.head_map(i).unwrap().shape(), &[2, 1, s, s]);
            }
            assert_eq!(tr.final_map().shape(), &[2, 1, s, s]);
            assert!(tr.final_map().data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn zero_network_outputs_half() {
        let cfg = NetworkConfig::new(32, 0.125, 1);
        let m = MsdnnModel::<f64>::zeros(cfg).unwrap();
        let tr = m.forward(&image(1, 32, 2)).unwrap();
        for i in 1..=4 {
            assert!(tr.head_map(i).unwrap().data().iter().all(|&v| v == 0.5));
        }
        assert!(tr.final_map().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_input_fc_is_zero() {
        let cfg = NetworkConfig::new(32, 0.125, 1);
        let mut m = MsdnnModel::<f64>::init(cfg, 4).unwrap();
        let bias = m.params_mut().get_mut("encoder.fm5.bias").unwrap();
        bias.value.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = i as f64);
        let zero = Tensor::zeros(&[1, 3, 32, 32]).unwrap();
        let tr = m.forward(&zero).unwrap();
        assert!(tr.encoder.fc.data().iter().all(|&v| v == 0.0));
        let fm5 = &tr.encoder.fm5;
        for c in 0..fm5.shape()[1] {
            assert!((0..2).all(|h| (0..2).all(|w| fm5.at4(0, c, h, w) == c as f64)));
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = MsdnnModel::<f64>::init(NetworkConfig::new(32, 0.125, 1), 5).unwrap();
        let x = image(2, 32, 6);
        assert_eq!(m.forward(&x).unwrap(), m.forward(&x).unwrap());
    }

    #[test]
    fn single_head_ablation_wiring() {
        let cfg = NetworkConfig::new(32, 0.125, 1).with_scales(&[4]);
        let m = MsdnnModel::<f64>::init(cfg, 5).unwrap();
        let tr = m.forward(&image(1, 32, 6)).unwrap();
        assert_eq!(tr.fcm.input.shape(), &[1, 1, 32, 32]);
        assert!(tr.fm(3).is_none());
        assert!(tr.head_map(3).is_none());
    }

    #[test]
    fn fusion_depends_on_every_head() {
        let m = MsdnnModel::<f64>::init(NetworkConfig::new(32, 0.125, 1), 9).unwrap();
        let tr = m.forward(&image(1, 32, 10)).unwrap();
        let maps: Vec<Tensor> = (1..=4).map(|i| tr.head_map(i).unwrap().clone()).collect();
        let base = m.fcm_forward(&maps.iter().collect::<Vec<_>>()).unwrap().map;
        for i in 0..4 {
            let mut probe = maps.clone();
            probe[i] = probe[i].map(|v| 1.0 - v);
            let out = m.fcm_forward(&probe.iter().collect::<Vec<_>>()).unwrap().map;
            assert_ne!(out, base, "fusion output ignores head {}", i + 1);
        }
    }

    #[test]
    fn wrong_input_size() {
        let m = MsdnnModel::<f64>::init(NetworkConfig::new(32, 0.125, 1), 5).unwrap();
        assert!(m.forward(&image(1, 64, 1)).is_err());
        let gray = Tensor::zeros(&[1, 1, 32, 32]).unwrap();
        assert!(m.forward(&gray).is_err());
    }

    #[test]
    fn mismatched_trace_rejected() {
        let a = MsdnnModel::<f64>::init(NetworkConfig::new(32, 0.125, 1), 5).unwrap();
        let mut b = MsdnnModel::<f64>::init(NetworkConfig::new(32, 0.125, 2), 5).unwrap();
        let tr = a.forward(&image(1, 32, 1)).unwrap();
        let grads = LogitGrads {
            final_logit: tr.final_logit().zeros_like(),
            heads: BTreeMap::new(),
        };
        assert!(matches!(b.backward(&tr, &grads), Err(Error::Consistency(_))));
    }
}
