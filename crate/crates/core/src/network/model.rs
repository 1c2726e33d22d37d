//! Full network assembly.
//!
//! Wiring, with `F_k` the encoder features at scale `1/2^(k-1)`:
//!
//! - encoder stage `k`: two `conv3x3 + BN + ReLU` layers produce `F_k`, then a
//!   2x2 max-pool; after five stages the bottleneck sits at `1/32`.
//! - the bottleneck block turns the pooled `F_5` into `C_5` and the
//!   deep-supervision logits.
//! - decoder stage `k` (5 down to 1): a 1x1 conv brings the incoming stream to
//!   `F_k`'s width, it is upsampled x2, fused with `F_k`, and refined. The
//!   refinement input is the fused connectivity stream, except at stage 1
//!   where both fused streams are added.
//! - the directional head maps stage 1 to 8 channels.

use crate::blocks::{
    dscrim_forward, msffm_forward, msrcm_forward, pconv_forward, DscrimParams, MsffmParams, MsrcmParams, PconvParams,
};
use crate::error::{Error, Result};
use crate::nn::{batch_norm_infer, conv2d, max_pool_2x2, relu, sigmoid_tensor, upsample, BatchNormParams, ConvParams};
use crate::params::{batch_norm, conv, Fill, FillProvider, ParamKind, ParamProvider, SpecCollector, StoreProvider};
use crate::tensor::{Shape, Tensor};
use crate::weights::WeightStore;

use super::config::{NetworkConfig, STAGES};

/// Channels of the input image.
pub const IMAGE_CHANNELS: usize = 3;
/// Channels of each connectivity output.
pub const OUTPUT_CHANNELS: usize = 8;

#[derive(Clone, Debug)]
pub struct EncoderStage {
    pub conv1: ConvParams,
    pub bn1: BatchNormParams,
    pub conv2: ConvParams,
    pub bn2: BatchNormParams,
}

#[derive(Clone, Debug)]
pub struct DecoderStage {
    /// 1-based stage index; matches the encoder stage it reads from.
    pub level: usize,
    pub reduce: ConvParams,
    pub msffm: MsffmParams,
    pub msrcm: MsrcmParams,
}

#[derive(Clone, Debug)]
pub struct NetworkParams {
    pub encoder: Vec<EncoderStage>,
    pub dscrim: DscrimParams,
    /// Ordered from the deepest stage (5) to the shallowest (1).
    pub decoder: Vec<DecoderStage>,
    pub head: PconvParams,
}

impl NetworkParams {
    pub fn declare(p: &mut dyn ParamProvider, cfg: &NetworkConfig) -> Result<Self> {
        let ch = &cfg.encoder_channels;
        let mut encoder = Vec::with_capacity(STAGES);
        let mut c_in = IMAGE_CHANNELS;
        for (k, &c) in ch.iter().enumerate() {
            let prefix = format!("enc{}", k + 1);
            encoder.push(EncoderStage {
                conv1: conv(p, &format!("{prefix}.conv1"), c, c_in, (3, 3))?,
                bn1: batch_norm(p, &format!("{prefix}.bn1"), c)?,
                conv2: conv(p, &format!("{prefix}.conv2"), c, c, (3, 3))?,
                bn2: batch_norm(p, &format!("{prefix}.bn2"), c)?,
            });
            c_in = c;
        }

        let c5 = ch[STAGES - 1];
        let dscrim = DscrimParams::declare(
            p,
            "dscrim",
            c5,
            cfg.dscrim_head_channels(),
            cfg.cam_hidden(c5 / 8),
            cfg.sam_kernel,
        )?;

        let mut decoder = Vec::with_capacity(STAGES);
        for level in (1..=STAGES).rev() {
            let c = ch[level - 1];
            let c_prev = if level == STAGES { c5 } else { ch[level] };
            let prefix = format!("dec{level}");
            decoder.push(DecoderStage {
                level,
                reduce: conv(p, &format!("{prefix}.reduce"), c, c_prev, (1, 1))?,
                msffm: MsffmParams::declare(p, &format!("{prefix}.msffm"), c)?,
                msrcm: MsrcmParams::declare(p, &format!("{prefix}.msrcm"), c, c)?,
            });
        }

        let head = PconvParams::declare(p, "head", ch[0], OUTPUT_CHANNELS)?;
        Ok(NetworkParams {
            encoder,
            dscrim,
            decoder,
            head,
        })
    }
}

/// Both outputs are post-sigmoid, `(n, 8, H, W)`.
#[derive(Clone, Debug)]
pub struct NetworkOutput {
    /// Deep-supervision output from the bottleneck block.
    pub output1: Tensor,
    /// Output of the directional head.
    pub output2: Tensor,
}

/// A validated, immutable network.
#[derive(Clone, Debug)]
pub struct Network {
    cfg: NetworkConfig,
    params: NetworkParams,
}

impl Network {
    /// Validates `cfg` and checks that `store` holds exactly the declared
    /// parameters with matching dims.
    pub fn build(cfg: &NetworkConfig, store: &WeightStore) -> Result<Self> {
        cfg.validate()?;
        let mut provider = StoreProvider::new(store, cfg.bn_epsilon);
        let params = NetworkParams::declare(&mut provider, cfg)?;
        provider.finish()?;
        Ok(Network {
            cfg: cfg.clone(),
            params,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn forward(&self, image: &Tensor) -> Result<NetworkOutput> {
        let s = image.shape();
        let [h, w] = self.cfg.input_size;
        let expected = Shape::new(s.n, IMAGE_CHANNELS, h, w);
        if s != expected || s.n == 0 {
            return Err(junction("input", s, expected));
        }
        let settings = self.cfg.block_settings();

        let mut skips = Vec::with_capacity(STAGES);
        let mut x = image.clone();
        for stage in &self.params.encoder {
            let y = relu(&batch_norm_infer(&conv2d(&x, &stage.conv1)?, &stage.bn1)?);
            let f = relu(&batch_norm_infer(&conv2d(&y, &stage.conv2)?, &stage.bn2)?);
            x = max_pool_2x2(&f)?;
            skips.push(f);
        }

        let bottleneck = dscrim_forward(&x, &self.params.dscrim, &settings, (h, w))?;
        let mut stream = bottleneck.c5;
        for stage in &self.params.decoder {
            let skip = &skips[stage.level - 1];
            let up = upsample(&conv2d(&stream, &stage.reduce)?, 2, settings.upsample_mode)?;
            if up.shape() != skip.shape() {
                return Err(junction(&format!("dec{}.skip", stage.level), up.shape(), skip.shape()));
            }
            let (c_next, f_next) = msffm_forward(skip, &up, &stage.msffm)?;
            let refined_in = if stage.level == 1 { c_next.add(&f_next)? } else { c_next };
            stream = msrcm_forward(&refined_in, &stage.msrcm)?;
        }

        let head = pconv_forward(&stream, &self.params.head, settings.shift_fill)?;
        Ok(NetworkOutput {
            output1: sigmoid_tensor(&bottleneck.p_out),
            output2: sigmoid_tensor(&head),
        })
    }
}

fn junction(name: &str, left: Shape, right: Shape) -> Error {
    Error::Junction {
        junction: name.to_string(),
        left,
        right,
    }
}

/// `(name, dims, kind)` of every parameter `cfg` declares, in declaration order.
pub fn param_specs(cfg: &NetworkConfig) -> Result<Vec<(String, Shape, ParamKind)>> {
    cfg.validate()?;
    let mut collector = SpecCollector::default();
    NetworkParams::declare(&mut collector, cfg)?;
    Ok(collector.specs)
}

/// A complete weight store for `cfg`, zero or seeded.
pub fn init_weights(cfg: &NetworkConfig, fill: Fill) -> Result<WeightStore> {
    cfg.validate()?;
    let mut provider = FillProvider::new(fill, cfg.bn_epsilon);
    NetworkParams::declare(&mut provider, cfg)?;
    Ok(provider.store)
}
