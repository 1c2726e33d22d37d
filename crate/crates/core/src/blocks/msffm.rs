//! Skip-connection fusion of a feature stream `F` and a connectivity stream `C`.
//!
//! Per direction group: `F` is gated by strip (coordinate) attention and
//! normalised to `X_F`; `C` goes through a 3x3 conv and normalisation to
//! `X_C`. Each side's softmaxed channel descriptor weights the other side's
//! channels into a single spatial map; the two maps summed and squashed form
//! one gate applied to both streams.

use super::{check_groups, GROUPS};
use crate::error::{Error, Result};
use crate::nn::{
    batch_norm_infer, channel_weighted_sum, conv2d, directional_avg_pool, global_avg_pool, sigmoid_tensor,
    softmax_channels, BatchNormParams, ConvParams, PoolAxis,
};
use crate::params::{batch_norm, conv, ParamProvider};
use crate::tensor::{concat_channels, Shape, Tensor};

#[derive(Clone, Debug)]
pub struct MsffmGroupParams {
    /// `1 x 3` conv over the concatenated pooled strip.
    pub strip: ConvParams,
    pub bn_f: BatchNormParams,
    pub conv3x3: ConvParams,
    pub bn_c: BatchNormParams,
}

#[derive(Clone, Debug)]
pub struct MsffmParams {
    pub groups: Vec<MsffmGroupParams>,
}

impl MsffmParams {
    pub fn declare(p: &mut dyn ParamProvider, prefix: &str, channels: usize) -> Result<Self> {
        let g = check_groups("msffm", channels)?;
        let groups = (1..=GROUPS)
            .map(|i| {
                let gp = format!("{prefix}.group{i}");
                Ok(MsffmGroupParams {
                    strip: conv(p, &format!("{gp}.strip"), g, g, (1, 3))?,
                    bn_f: batch_norm(p, &format!("{gp}.bn_f"), g)?,
                    conv3x3: conv(p, &format!("{gp}.conv3x3"), g, g, (3, 3))?,
                    bn_c: batch_norm(p, &format!("{gp}.bn_c"), g)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(MsffmParams { groups })
    }
}

/// `[Avg_H(x) | Avg_W(x)^T]` as an `(n, c, 1, w + h)` strip.
fn pooled_strip(x: &Tensor) -> Tensor {
    let s = x.shape();
    let cols = directional_avg_pool(x, PoolAxis::Height);
    let rows = directional_avg_pool(x, PoolAxis::Width);
    Tensor::from_fn(Shape::new(s.n, s.c, 1, s.w + s.h), |n, c, _, i| {
        if i < s.w {
            cols.at(n, c, 0, i)
        } else {
            rows.at(n, c, i - s.w, 0)
        }
    })
}

/// Coordinate-attention gate: the strip is split back into a per-column gate
/// `(n, c, 1, w)` and a per-row gate `(n, c, h, 1)`.
fn strip_gates(x: &Tensor, strip: &ConvParams) -> Result<(Tensor, Tensor)> {
    let s = x.shape();
    let weights = sigmoid_tensor(&conv2d(&pooled_strip(x), strip)?);
    let col_gate = Tensor::from_fn(Shape::new(s.n, s.c, 1, s.w), |n, c, _, i| weights.at(n, c, 0, i));
    let row_gate = Tensor::from_fn(Shape::new(s.n, s.c, s.h, 1), |n, c, i, _| weights.at(n, c, 0, s.w + i));
    Ok((col_gate, row_gate))
}

/// One direction group, returning `(c_next, f_next)`.
pub fn msffm_group(f: &Tensor, c: &Tensor, gp: &MsffmGroupParams) -> Result<(Tensor, Tensor)> {
    let (col_gate, row_gate) = strip_gates(f, &gp.strip)?;
    let x_f = batch_norm_infer(&f.mul(&row_gate)?.mul(&col_gate)?, &gp.bn_f)?;
    let x_c = batch_norm_infer(&conv2d(c, &gp.conv3x3)?, &gp.bn_c)?;

    let w_f = softmax_channels(&global_avg_pool(&x_f)?)?;
    let w_fc = channel_weighted_sum(&x_c, &w_f)?;
    let w_c = softmax_channels(&global_avg_pool(&x_c)?)?;
    let w_cf = channel_weighted_sum(&x_f, &w_c)?;

    let gate = sigmoid_tensor(&w_cf.add(&w_fc)?);
    Ok((c.mul(&gate)?, f.mul(&gate)?))
}

/// Returns `(c_next, f_next)`, both with the input dims.
pub fn msffm_forward(f: &Tensor, c: &Tensor, p: &MsffmParams) -> Result<(Tensor, Tensor)> {
    if f.shape() != c.shape() {
        return Err(Error::ShapeMismatch {
            op: "msffm",
            left: f.shape(),
            right: c.shape(),
        });
    }
    check_groups("msffm", f.shape().c)?;
    if p.groups.len() != GROUPS {
        return Err(Error::invalid(
            "msffm",
            format!("{} group parameter sets", p.groups.len()),
        ));
    }
    let mut c_parts = Vec::with_capacity(GROUPS);
    let mut f_parts = Vec::with_capacity(GROUPS);
    for ((fi, ci), gp) in f
        .split_channels(GROUPS)?
        .iter()
        .zip(&c.split_channels(GROUPS)?)
        .zip(&p.groups)
    {
        let (cn, fn_) = msffm_group(fi, ci, gp)?;
        c_parts.push(cn);
        f_parts.push(fn_);
    }
    Ok((concat_channels(&c_parts)?, concat_channels(&f_parts)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Fill, FillProvider};

    fn params(fill: Fill, channels: usize) -> MsffmParams {
        MsffmParams::declare(&mut FillProvider::new(fill, 1e-5), "msffm", channels).unwrap()
    }

    #[test]
    fn zero_inputs_give_zero() {
        let z = Tensor::zeros(Shape::new(1, 8, 4, 4));
        let (c, f) = msffm_forward(&z, &z, &params(Fill::Seeded(5), 8)).unwrap();
        assert!(c.data().iter().chain(f.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn shape_contract() {
        let x = Tensor::from_fn(Shape::new(1, 32, 16, 16), |_, c, h, w| {
            ((c * 7 + h * 3 + w) % 11) as f32 * 0.1
        });
        let (c, f) = msffm_forward(&x, &x, &params(Fill::Seeded(6), 32)).unwrap();
        assert_eq!(c.shape(), x.shape());
        assert_eq!(f.shape(), x.shape());
    }

    #[test]
    fn pooled_strip_layout() {
        let x = Tensor::new(Shape::new(1, 1, 2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(pooled_strip(&x).data(), &[2.5, 3.5, 4.5, 2.0, 5.0]);
    }

    #[test]
    fn single_group_hand_check() {
        // one channel per group, 2x2 spatial; zero strip conv -> both strip gates 0.5,
        // identity BNs (eps 0) and a centre-tap 3x3 conv of weight 2.
        let mut gp = params(Fill::Zeros, 8).groups.remove(0);
        gp.bn_f = BatchNormParams::identity(1, 0.0);
        gp.bn_c = BatchNormParams::identity(1, 0.0);
        let mut w = vec![0.0; 9];
        w[4] = 2.0;
        gp.conv3x3 = ConvParams::same(Tensor::new(Shape::new(1, 1, 3, 3), w).unwrap(), Some(vec![0.0])).unwrap();

        let f = Tensor::new(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = Tensor::new(Shape::new(1, 1, 2, 2), vec![0.5, -1.0, 0.0, 1.0]).unwrap();
        let (cn, fn_) = msffm_group(&f, &c, &gp).unwrap();
        // x_f = f / 4, x_c = 2c; single-channel softmax weights are 1
        for i in 0..4 {
            let logit = f.data()[i] / 4.0 + 2.0 * c.data()[i];
            let gate = 1.0 / (1.0 + (-logit).exp());
            assert!((cn.data()[i] - c.data()[i] * gate).abs() < 1e-6);
            assert!((fn_.data()[i] - f.data()[i] * gate).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_weighted_channel_sum_by_hand() {
        // two channels: gap(x_f) = (0, ln 3) -> weights (0.25, 0.75)
        let x_f = Tensor::new(Shape::new(1, 2, 1, 2), vec![0.0, 0.0, 3f32.ln(), 3f32.ln()]).unwrap();
        let x_c = Tensor::new(Shape::new(1, 2, 1, 2), vec![4.0, 8.0, 0.0, 4.0]).unwrap();
        let w_f = softmax_channels(&global_avg_pool(&x_f).unwrap()).unwrap();
        let w_fc = channel_weighted_sum(&x_c, &w_f).unwrap();
        assert!((w_fc.data()[0] - 1.0).abs() < 1e-6);
        assert!((w_fc.data()[1] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_mismatch() {
        let p = params(Fill::Zeros, 8);
        let a = Tensor::zeros(Shape::new(1, 8, 4, 4));
        let b = Tensor::zeros(Shape::new(1, 8, 4, 2));
        assert!(matches!(msffm_forward(&a, &b, &p), Err(Error::ShapeMismatch { .. })));
        let odd = Tensor::zeros(Shape::new(1, 12, 4, 4));
        assert!(msffm_forward(&odd, &odd, &p).is_err());
    }
}
