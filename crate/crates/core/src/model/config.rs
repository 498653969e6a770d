use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rcl::RclConfig;

/// Number of recurrent blocks in the encoder.
pub const RECURRENT_BLOCKS: usize = 4;
/// Total downsampling of the encoder (four 2×2 poolings).
pub const ENCODER_STRIDE: usize = 16;

/// Architecture description. Channel widths are given at full scale and
/// multiplied by `scale_factor`; `input_size` is the actual network input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub base_channels: usize,
    pub rcl_channels: usize,
    pub fc_reshape_channels: usize,
    /// Width of the fully connected layer after scaling:
    /// `(input_size / 16)² · scaled(fc_reshape_channels)`.
    pub fc_nodes: usize,
    pub fm_channels: usize,
    pub fcm_channels: [usize; 2],
    pub timesteps: usize,
    pub scale_factor: f64,
    /// Saliency heads fed to the fusion module, a non-empty subset of 1..=4.
    pub enabled_scales: Vec<usize>,
    pub deep_supervision_weight: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::new(224, 1.0, 3)
    }
}

impl NetworkConfig {
    /// Full architecture at the given input size, channel scale and unfold
    /// depth, with all four scales enabled.
    pub fn new(input_size: usize, scale_factor: f64, timesteps: usize) -> Self {
        let mut cfg = NetworkConfig {
            input_size,
            base_channels: 64,
            rcl_channels: 96,
            fc_reshape_channels: 32,
            fc_nodes: 0,
            fm_channels: 64,
            fcm_channels: [32, 64],
            timesteps,
            scale_factor,
            enabled_scales: vec![1, 2, 3, 4],
            deep_supervision_weight: 1.0,
        };
        cfg.fc_nodes = cfg.expected_fc_nodes();
        cfg
    }

    pub fn with_scales(mut self, scales: &[usize]) -> Self {
        let mut s = scales.to_vec();
        s.sort_unstable();
        s.dedup();
        self.enabled_scales = s;
        self
    }

    pub fn scaled(&self, channels: usize) -> usize {
        ((channels as f64 * self.scale_factor).round() as usize).max(1)
    }

    pub fn conv1_width(&self) -> usize {
        self.scaled(self.base_channels)
    }

    pub fn rcl_width(&self) -> usize {
        self.scaled(self.rcl_channels)
    }

    pub fn fm_width(&self) -> usize {
        self.scaled(self.fm_channels)
    }

    pub fn fc_width(&self) -> usize {
        self.scaled(self.fc_reshape_channels)
    }

    pub fn fcm_widths(&self) -> [usize; 2] {
        [self.scaled(self.fcm_channels[0]), self.scaled(self.fcm_channels[1])]
    }

    /// Spatial size of `X_4`, `Fm_5` and `Fm_4`.
    pub fn coarse_size(&self) -> usize {
        self.input_size / ENCODER_STRIDE
    }

    pub fn expected_fc_nodes(&self) -> usize {
        self.coarse_size().pow(2) * self.fc_width()
    }

    /// Finest decoder level that has to be computed.
    pub fn finest_scale(&self) -> usize {
        self.enabled_scales.iter().copied().min().unwrap_or(4)
    }

    pub fn rcl_config(&self, block: usize) -> RclConfig {
        let cin = if block == 1 { self.conv1_width() } else { self.rcl_width() };
        RclConfig::new(cin, self.rcl_width(), self.timesteps)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_size == 0 || !self.input_size.is_multiple_of(ENCODER_STRIDE) {
            return bad(format!("input_size {} must be a positive multiple of 16", self.input_size));
        }
        if !(self.scale_factor.is_finite() && self.scale_factor > 0.0) {
            return bad(format!("scale_factor {} must be positive", self.scale_factor));
        }
        for (name, v) in [
            ("base_channels", self.base_channels),
            ("rcl_channels", self.rcl_channels),
            ("fc_reshape_channels", self.fc_reshape_channels),
            ("fm_channels", self.fm_channels),
            ("fcm_channels[0]", self.fcm_channels[0]),
            ("fcm_channels[1]", self.fcm_channels[1]),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.enabled_scales.is_empty() {
            return bad("enabled_scales must not be empty".into());
        }
        if self.enabled_scales.windows(2).any(|w| w[0] >= w[1])
            || self.enabled_scales.iter().any(|s| !(1..=4).contains(s))
        {
            return bad(format!(
                "enabled_scales {:?} must be distinct values in 1..=4, ascending",
                self.enabled_scales
            ));
        }
        if !(self.deep_supervision_weight.is_finite() && self.deep_supervision_weight >= 0.0) {
            return bad("deep_supervision_weight must be non-negative".into());
        }
        if self.fc_nodes != self.expected_fc_nodes() {
            return bad(format!(
                "fc_nodes {} inconsistent with (input_size/16)^2 * fc channels = {}",
                self.fc_nodes,
                self.expected_fc_nodes()
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Conv,
    Deconv { stride: usize },
    Dense,
    RclFeedforward,
    RclRecurrent,
    Bias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub path: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn fan_in(&self) -> usize {
        let s = &self.shape;
        match self.kind {
            ParamKind::Conv | ParamKind::RclFeedforward | ParamKind::RclRecurrent => s[1] * s[2] * s[3],
            ParamKind::Deconv { stride } => s[0] * s[2].div_ceil(stride) * s[3].div_ceil(stride),
            ParamKind::Dense => s[1],
            ParamKind::Bias => 1,
        }
    }
}

fn push_conv(out: &mut Vec<ParamSpec>, path: &str, cout: usize, cin: usize, k: usize) {
    out.push(ParamSpec {
        path: format!("{path}.weight"),
        shape: vec![cout, cin, k, k],
        kind: ParamKind::Conv,
    });
    out.push(ParamSpec {
        path: format!("{path}.bias"),
        shape: vec![cout],
        kind: ParamKind::Bias,
    });
}

fn push_deconv(out: &mut Vec<ParamSpec>, path: &str, cin: usize, cout: usize, k: usize) {
    out.push(ParamSpec {
        path: format!("{path}.weight"),
        shape: vec![cin, cout, k, k],
        kind: ParamKind::Deconv { stride: k },
    });
    out.push(ParamSpec {
        path: format!("{path}.bias"),
        shape: vec![cout],
        kind: ParamKind::Bias,
    });
}

/// Every learnable tensor of the network, in checkpoint order.
pub fn param_specs(cfg: &NetworkConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let c1 = cfg.conv1_width();
    let rc = cfg.rcl_width();
    let fm = cfg.fm_width();
    let fcc = cfg.fc_width();

    push_conv(&mut out, "encoder.conv1.0", c1, 3, 3);
    push_conv(&mut out, "encoder.conv1.1", c1, c1, 3);
    for block in 1..=RECURRENT_BLOCKS {
        let r = cfg.rcl_config(block);
        out.push(ParamSpec {
            path: format!("encoder.rcl{block}.w_f"),
            shape: r.feedforward_shape().to_vec(),
            kind: ParamKind::RclFeedforward,
        });
        out.push(ParamSpec {
            path: format!("encoder.rcl{block}.w_r"),
            shape: r.recurrent_shape().to_vec(),
            kind: ParamKind::RclRecurrent,
        });
        out.push(ParamSpec {
            path: format!("encoder.rcl{block}.b"),
            shape: vec![rc],
            kind: ParamKind::Bias,
        });
    }
    let flat = rc * cfg.coarse_size().pow(2);
    out.push(ParamSpec {
        path: "encoder.fc.weight".into(),
        shape: vec![cfg.fc_nodes, flat],
        kind: ParamKind::Dense,
    });
    out.push(ParamSpec {
        path: "encoder.fc.bias".into(),
        shape: vec![cfg.fc_nodes],
        kind: ParamKind::Bias,
    });
    push_conv(&mut out, "encoder.fm5", fm, fcc, 3);

    push_conv(&mut out, "decoder.fm4", fm, fm + rc, 3);
    for level in (cfg.finest_scale()..=3).rev() {
        push_deconv(&mut out, &format!("decoder.up{level}"), fm, fm, 2);
        push_conv(&mut out, &format!("decoder.fm{level}"), fm, fm + rc, 3);
    }
    for &scale in &cfg.enabled_scales {
        push_deconv(&mut out, &format!("head.sm{scale}"), fm, 1, 1 << scale);
    }

    let [f1, f2] = cfg.fcm_widths();
    push_conv(&mut out, "fcm.conv1", f1, cfg.enabled_scales.len(), 3);
    push_conv(&mut out, "fcm.conv2", f2, f1, 3);
    push_conv(&mut out, "fcm.conv3", 1, f2, 3);
    out
}
