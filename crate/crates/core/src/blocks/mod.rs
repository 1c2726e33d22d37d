//! Forward passes of the network's building blocks.
//!
//! Grouped blocks split their input into [`GROUPS`] channel groups, one per
//! neighbour direction, and run an independent per-group pipeline; the
//! per-group functions are public so the grouping can be checked directly.

mod attention;
mod dscrim;
mod msffm;
mod msrcm;
mod pconv;

use serde::{Deserialize, Serialize};

pub use attention::{channel_attention, spatial_attention, ChannelAttentionParams, SpatialAttentionParams};
pub use dscrim::{dscrim_forward, dscrim_group, DscrimGroupParams, DscrimOutput, DscrimParams, DSCRIM_UPSAMPLE};
pub use msffm::{msffm_forward, msffm_group, MsffmGroupParams, MsffmParams};
pub use msrcm::{msrcm_forward, MsrcmBranch, MsrcmParams, MSRCM_KERNELS};
pub use pconv::{pconv_forward, PconvParams};

use crate::connectivity::ShiftFill;
use crate::error::{Error, Result};
use crate::nn::UpsampleMode;

/// Channel groups in every grouped block: one per connectivity direction.
pub const GROUPS: usize = 8;

/// How the directional gate enters the bottleneck fusion step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatePlacement {
    /// `X + conv((SAM(X) + CAM(X)) * P)`: fuse both attentions, then gate.
    #[default]
    Fused,
    /// `X + conv(SAM(X) + CAM(X) * P)`: gate only the channel attention.
    ChannelOnly,
}

/// Non-learned switches shared by the blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlockSettings {
    pub shift_fill: ShiftFill,
    pub upsample_mode: UpsampleMode,
    pub gate_placement: GatePlacement,
}

pub(crate) fn check_groups(op: &'static str, channels: usize) -> Result<usize> {
    if channels == 0 || !channels.is_multiple_of(GROUPS) {
        return Err(Error::IndivisibleChannels {
            op,
            channels,
            groups: GROUPS,
        });
    }
    Ok(channels / GROUPS)
}
