//! Bottleneck connectivity injection.
//!
//! A deep-supervision head predicts an 8-channel connectivity map at full
//! resolution straight from the bottleneck; its pooled response becomes a
//! per-channel directional gate. The bottleneck itself is split into eight
//! direction groups, each shifted along its direction and refined by spatial
//! and channel attention under that gate.

use super::attention::{channel_attention, spatial_attention, ChannelAttentionParams, SpatialAttentionParams};
use super::{check_groups, BlockSettings, GatePlacement, GROUPS};
use crate::connectivity::{shift, Direction};
use crate::error::{Error, Result};
use crate::nn::{conv2d, global_avg_pool, sigmoid_tensor, upsample, ConvParams};
use crate::params::{conv, ParamProvider};
use crate::tensor::{concat_channels, Tensor};

/// Spatial factor between the bottleneck and the deep-supervision output.
pub const DSCRIM_UPSAMPLE: usize = 32;

#[derive(Clone, Debug)]
pub struct DscrimGroupParams {
    pub cam: ChannelAttentionParams,
    pub sam: SpatialAttentionParams,
    pub fuse: ConvParams,
}

#[derive(Clone, Debug)]
pub struct DscrimParams {
    /// Bottleneck to head width, before upsampling.
    pub pre: ConvParams,
    /// Head width to the 8 connectivity channels, at full resolution.
    pub out: ConvParams,
    /// Pooled head output to one gate per bottleneck channel.
    pub padd: ConvParams,
    pub groups: Vec<DscrimGroupParams>,
    pub post: ConvParams,
}

impl DscrimParams {
    pub fn declare(
        p: &mut dyn ParamProvider,
        prefix: &str,
        channels: usize,
        head_channels: usize,
        cam_hidden: usize,
        sam_kernel: usize,
    ) -> Result<Self> {
        let g = check_groups("dscrim", channels)?;
        let pre = conv(p, &format!("{prefix}.pre.conv1x1"), head_channels, channels, (1, 1))?;
        let out = conv(p, &format!("{prefix}.out.conv1x1"), 8, head_channels, (1, 1))?;
        let padd = conv(p, &format!("{prefix}.padd.conv1x1"), channels, 8, (1, 1))?;
        let groups = (1..=GROUPS)
            .map(|i| {
                let gp = format!("{prefix}.group{i}");
                Ok(DscrimGroupParams {
                    cam: ChannelAttentionParams::declare(p, &format!("{gp}.cam"), g, cam_hidden)?,
                    sam: SpatialAttentionParams::declare(p, &format!("{gp}.sam"), sam_kernel)?,
                    fuse: conv(p, &format!("{gp}.fuse.conv1x1"), g, g, (1, 1))?,
                })
            })
            .collect::<Result<_>>()?;
        let post = conv(p, &format!("{prefix}.post.conv1x1"), channels, channels, (1, 1))?;
        Ok(DscrimParams {
            pre,
            out,
            padd,
            groups,
            post,
        })
    }
}

#[derive(Clone, Debug)]
pub struct DscrimOutput {
    /// Bottleneck connectivity features, same dims as the input.
    pub c5: Tensor,
    /// Deep-supervision logits `(n, 8, 32h, 32w)`.
    pub p_out: Tensor,
}

/// One direction group: `x + fuse(gate(SAM(x), CAM(x), p))`.
pub fn dscrim_group(x: &Tensor, gate: &Tensor, gp: &DscrimGroupParams, placement: GatePlacement) -> Result<Tensor> {
    let sam = spatial_attention(x, &gp.sam)?;
    let cam = channel_attention(x, &gp.cam)?;
    let fused = match placement {
        GatePlacement::Fused => sam.add(&cam)?.mul(gate)?,
        GatePlacement::ChannelOnly => sam.add(&cam.mul(gate)?)?,
    };
    x.add(&conv2d(&fused, &gp.fuse)?)
}

pub fn dscrim_forward(
    f5: &Tensor,
    p: &DscrimParams,
    settings: &BlockSettings,
    full_res: (usize, usize),
) -> Result<DscrimOutput> {
    let s = f5.shape();
    check_groups("dscrim", s.c)?;
    if full_res != (s.h * DSCRIM_UPSAMPLE, s.w * DSCRIM_UPSAMPLE) {
        return Err(Error::invalid(
            "dscrim",
            format!(
                "full resolution {full_res:?} is not {DSCRIM_UPSAMPLE}x the bottleneck {}x{}",
                s.h, s.w
            ),
        ));
    }
    if p.groups.len() != GROUPS {
        return Err(Error::invalid(
            "dscrim",
            format!("{} group parameter sets", p.groups.len()),
        ));
    }

    let head = upsample(&conv2d(f5, &p.pre)?, DSCRIM_UPSAMPLE, settings.upsample_mode)?;
    let p_out = conv2d(&head, &p.out)?;
    let p_add = sigmoid_tensor(&conv2d(&global_avg_pool(&p_out)?, &p.padd)?);
    let gates = p_add.split_channels(GROUPS)?;

    let fused = f5
        .split_channels(GROUPS)?
        .iter()
        .zip(Direction::ALL)
        .zip(gates.iter().zip(&p.groups))
        .map(|((x, d), (gate, gp))| dscrim_group(&shift(x, d, settings.shift_fill), gate, gp, settings.gate_placement))
        .collect::<Result<Vec<_>>>()?;
    let c5 = conv2d(&concat_channels(&fused)?, &p.post)?;
    Ok(DscrimOutput { c5, p_out })
}
