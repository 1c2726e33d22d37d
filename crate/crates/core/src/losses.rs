//! Connectivity loss.
//!
//! Each connectivity output is scored three ways: the aggregated mask against
//! the ground truth, the voted map against the encoded truth, and the raw map
//! against the encoded truth. The deep-supervision output and the head output
//! are then mixed with a configurable weight.

use serde::{Deserialize, Serialize};

use crate::connectivity::{
    bilateral_vote, encode_connectivity, rca_aggregate, BinaryMask, BoundaryConvention, ConnectivityMask,
};
use crate::error::{Error, Result};
use crate::network::NetworkOutput;
use crate::tensor::Tensor;

/// Probability clamp applied before every logarithm.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_bbce: f64,
    pub w_cbce: f64,
    pub w_output1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_bbce: 0.2,
            w_cbce: 0.8,
            w_output1: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w_bbce", self.w_bbce),
            ("w_cbce", self.w_cbce),
            ("w_output1", self.w_output1),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "loss weight {name} = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// Loss terms for one connectivity output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositeLoss {
    pub l_main_bce: f64,
    pub l_bbce: f64,
    pub l_cbce: f64,
    pub l_combined: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub output1: CompositeLoss,
    pub output2: CompositeLoss,
    pub total: f64,
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// Mean binary cross-entropy with predictions clamped to `[eps, 1 - eps]`.
pub fn bce(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_same("bce", pred, target)?;
    let n = pred.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = (p as f64).clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            let t = t as f64;
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / n as f64)
}

/// Mean of `p * t + (1 - p) * (1 - t)`: the agreement product, higher is better.
pub fn agreement_score(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_same("agreement_score", pred, target)?;
    let n = pred.data().len();
    if n == 0 {
        return Ok(1.0);
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let (p, t) = (p as f64, t as f64);
            p * t + (1.0 - p) * (1.0 - t)
        })
        .sum();
    Ok(sum / n as f64)
}

/// Loss of one single-image connectivity map `xc` against mask `y`.
pub fn composite_loss(
    xc: &ConnectivityMask,
    y: &BinaryMask,
    w: &LossWeights,
    conv: BoundaryConvention,
) -> Result<CompositeLoss> {
    let s = xc.shape();
    if s.n != 1 || (s.h, s.w) != (y.height(), y.width()) {
        return Err(Error::ShapeMismatch {
            op: "composite_loss",
            left: s,
            right: y.to_tensor().shape(),
        });
    }
    let xb = bilateral_vote(xc);
    let x = rca_aggregate(&xb);
    let yc = encode_connectivity(y, conv);

    let l_main_bce = bce(&x, &y.to_tensor())?;
    let l_bbce = bce(xb.tensor(), yc.tensor())?;
    let l_cbce = bce(xc.tensor(), yc.tensor())?;
    Ok(CompositeLoss {
        l_main_bce,
        l_bbce,
        l_cbce,
        l_combined: l_main_bce + w.w_bbce * l_bbce + w.w_cbce * l_cbce,
    })
}

/// `w_output1 * L(output1) + L(output2)`.
pub fn total_loss(
    out: &NetworkOutput,
    y: &BinaryMask,
    w: &LossWeights,
    conv: BoundaryConvention,
) -> Result<LossReport> {
    let output1 = composite_loss(&ConnectivityMask::new(out.output1.clone())?, y, w, conv)?;
    let output2 = composite_loss(&ConnectivityMask::new(out.output2.clone())?, y, w, conv)?;
    Ok(LossReport {
        output1,
        output2,
        total: w.w_output1 * output1.l_combined + output2.l_combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn blob() -> BinaryMask {
        BinaryMask::from_fn(6, 7, |y, x| (1..4).contains(&y) && (2..6).contains(&x))
    }

    #[test]
    fn bce_closed_forms() {
        let t = Tensor::from_fn(Shape::new(1, 1, 3, 3), |_, _, y, x| ((y + x) % 2) as f32);
        let half = Tensor::full(t.shape(), 0.5);
        assert!((bce(&half, &t).unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
        assert!(bce(&t, &t).unwrap() < 1e-6);
        let flipped = t.map(|v| 1.0 - v);
        assert!((bce(&flipped, &t).unwrap() + BCE_EPSILON.ln()).abs() < 1e-6);
        assert!(bce(&half, &Tensor::zeros(Shape::new(1, 1, 3, 2))).is_err());
    }

    #[test]
    fn perfect_connectivity_is_near_zero() {
        let y = blob();
        let xc = encode_connectivity(&y, BoundaryConvention::SameAsSelf);
        let l = composite_loss(&xc, &y, &LossWeights::default(), BoundaryConvention::SameAsSelf).unwrap();
        for v in [l.l_main_bce, l.l_bbce, l.l_cbce] {
            assert!(v < 1e-6, "{l:?}");
        }
        assert!(l.l_combined < 2e-6);
    }

    #[test]
    fn uniform_half_gives_ln2_cbce() {
        let xc = ConnectivityMask::new(Tensor::full(Shape::new(1, 8, 6, 7), 0.5)).unwrap();
        for y in [blob(), BinaryMask::zeros(6, 7)] {
            let l = composite_loss(&xc, &y, &LossWeights::default(), BoundaryConvention::SameAsSelf).unwrap();
            assert!((l.l_cbce - std::f64::consts::LN_2).abs() < 1e-9);
        }
    }

    #[test]
    fn weight_zeroing() {
        let xc = ConnectivityMask::new(Tensor::from_fn(Shape::new(1, 8, 6, 7), |_, c, y, x| {
            ((c + 2 * y + 3 * x) % 10) as f32 / 10.0
        }))
        .unwrap();
        let w = LossWeights {
            w_bbce: 0.0,
            w_cbce: 0.0,
            w_output1: 0.0,
        };
        let l = composite_loss(&xc, &blob(), &w, BoundaryConvention::SameAsSelf).unwrap();
        assert_eq!(l.l_combined, l.l_main_bce);
    }

    #[test]
    fn total_mixes_outputs() {
        let y = blob();
        let a = Tensor::from_fn(Shape::new(1, 8, 6, 7), |_, c, y, x| ((c * 3 + y + x) % 7) as f32 / 7.0);
        let b = Tensor::full(a.shape(), 0.3);
        let out = NetworkOutput { output1: a, output2: b };
        let w = LossWeights::default();
        let r = total_loss(&out, &y, &w, BoundaryConvention::SameAsSelf).unwrap();
        assert!((r.total - (0.2 * r.output1.l_combined + r.output2.l_combined)).abs() < 1e-12);
        let w0 = LossWeights { w_output1: 0.0, ..w };
        let r0 = total_loss(&out, &y, &w0, BoundaryConvention::SameAsSelf).unwrap();
        assert_eq!(r0.total, r0.output2.l_combined);
    }

    #[test]
    fn agreement_is_one_on_exact_binary() {
        let t = blob().to_tensor();
        assert_eq!(agreement_score(&t, &t).unwrap(), 1.0);
        assert_eq!(agreement_score(&t.map(|v| 1.0 - v), &t).unwrap(), 0.0);
    }

    #[test]
    fn weights_validate() {
        assert!(LossWeights::default().validate().is_ok());
        let bad = LossWeights {
            w_cbce: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
