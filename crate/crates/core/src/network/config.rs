use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blocks::{BlockSettings, GatePlacement, DSCRIM_UPSAMPLE};
use crate::connectivity::{BoundaryConvention, ShiftFill};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nn::UpsampleMode;

/// Network hyper-parameters. Every field has a default, so a TOML file only
/// needs the keys it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// `[height, width]`, each a multiple of 32.
    pub input_size: [usize; 2],
    /// Widths of the five encoder stages: strictly ascending multiples of 8.
    pub encoder_channels: Vec<usize>,
    pub upsample_mode: UpsampleMode,
    pub shift_fill: ShiftFill,
    pub boundary_convention: BoundaryConvention,
    pub decode_threshold: f32,
    pub loss_weights: LossWeights,
    pub gate_placement: GatePlacement,
    pub bn_epsilon: f32,
    /// Side of the square spatial-attention kernel (odd).
    pub sam_kernel: usize,
    /// Channel-attention hidden width is `max(1, group_width / cam_reduction)`.
    pub cam_reduction: usize,
}

pub const STAGES: usize = 5;

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_size: [256, 256],
            encoder_channels: vec![32, 64, 128, 256, 512],
            upsample_mode: UpsampleMode::default(),
            shift_fill: ShiftFill::default(),
            boundary_convention: BoundaryConvention::default(),
            decode_threshold: 0.5,
            loss_weights: LossWeights::default(),
            gate_placement: GatePlacement::default(),
            bn_epsilon: 1e-5,
            sam_kernel: 7,
            cam_reduction: 4,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        for (axis, v) in ["height", "width"].iter().zip(self.input_size) {
            if v < DSCRIM_UPSAMPLE || v % DSCRIM_UPSAMPLE != 0 {
                return fail(format!(
                    "input {axis} {v} must be a positive multiple of {DSCRIM_UPSAMPLE}"
                ));
            }
        }
        let ch = &self.encoder_channels;
        if ch.len() != STAGES {
            return fail(format!("encoder_channels needs {STAGES} entries, got {}", ch.len()));
        }
        if let Some(c) = ch.iter().find(|&&c| c == 0 || c % 8 != 0) {
            return fail(format!("encoder width {c} is not a positive multiple of 8"));
        }
        if ch.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("encoder_channels {ch:?} must be strictly ascending"));
        }
        if !(self.decode_threshold > 0.0 && self.decode_threshold < 1.0) {
            return fail(format!("decode_threshold {} must lie in (0, 1)", self.decode_threshold));
        }
        if !(self.bn_epsilon.is_finite() && self.bn_epsilon > 0.0) {
            return fail(format!("bn_epsilon {} must be positive", self.bn_epsilon));
        }
        if self.sam_kernel.is_multiple_of(2) {
            return fail(format!("sam_kernel {} must be odd", self.sam_kernel));
        }
        if self.cam_reduction == 0 {
            return fail("cam_reduction must be at least 1".into());
        }
        self.loss_weights.validate()
    }

    /// Parses and validates. Unparseable text is a format error; a well-formed
    /// file that breaks an invariant is a config error.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: NetworkConfig = toml::from_str(text).map_err(|e| Error::Format {
            format: "TOML",
            msg: e.message().trim().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn block_settings(&self) -> BlockSettings {
        BlockSettings {
            shift_fill: self.shift_fill,
            upsample_mode: self.upsample_mode,
            gate_placement: self.gate_placement,
        }
    }

    /// Width of the deep-supervision head inside the bottleneck block.
    pub fn dscrim_head_channels(&self) -> usize {
        self.encoder_channels[STAGES - 1] / 8
    }

    pub fn cam_hidden(&self, channels: usize) -> usize {
        (channels / self.cam_reduction).max(1)
    }

    /// Same config with every encoder width multiplied by `factor`.
    pub fn scaled_widths(&self, factor: usize) -> Self {
        NetworkConfig {
            encoder_channels: self.encoder_channels.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }
}
