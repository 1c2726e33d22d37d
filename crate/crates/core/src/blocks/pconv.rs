//! Directional prediction head: shift each direction group along its
//! direction, run one shared 3x3 kernel over every group, then re-encode.

use super::{check_groups, GROUPS};
use crate::connectivity::{shift, Direction, ShiftFill};
use crate::error::Result;
use crate::nn::{batch_norm_infer, conv2d, relu, BatchNormParams, ConvParams};
use crate::params::{batch_norm, conv, ParamProvider};
use crate::tensor::{concat_channels, Tensor};

#[derive(Clone, Debug)]
pub struct PconvParams {
    /// `(c/8, c/8, 3, 3)`, shared by all eight groups.
    pub shared: ConvParams,
    pub bn: BatchNormParams,
    pub out: ConvParams,
}

impl PconvParams {
    pub fn declare(p: &mut dyn ParamProvider, prefix: &str, c_in: usize, c_out: usize) -> Result<Self> {
        let g = check_groups("pconv", c_in)?;
        Ok(PconvParams {
            shared: conv(p, &format!("{prefix}.shared"), g, g, (3, 3))?,
            bn: batch_norm(p, &format!("{prefix}.bn"), c_in)?,
            out: conv(p, &format!("{prefix}.out"), c_out, c_in, (1, 1))?,
        })
    }
}

pub fn pconv_forward(x: &Tensor, p: &PconvParams, fill: ShiftFill) -> Result<Tensor> {
    check_groups("pconv", x.shape().c)?;
    let groups = x
        .split_channels(GROUPS)?
        .iter()
        .zip(Direction::ALL)
        .map(|(g, d)| conv2d(&shift(g, d, fill), &p.shared))
        .collect::<Result<Vec<_>>>()?;
    let merged = relu(&batch_norm_infer(&concat_channels(&groups)?, &p.bn)?);
    conv2d(&merged, &p.out)
}
