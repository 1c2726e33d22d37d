//! Multi-kernel residual refinement used at every decoder stage.

use crate::error::Result;
use crate::nn::{batch_norm_infer, conv2d, relu, BatchNormParams, ConvParams};
use crate::params::{batch_norm, conv, ParamProvider};
use crate::tensor::Tensor;

pub const MSRCM_KERNELS: [usize; 4] = [1, 3, 5, 7];

#[derive(Clone, Debug)]
pub struct MsrcmBranch {
    pub conv: ConvParams,
    pub bn: BatchNormParams,
}

#[derive(Clone, Debug)]
pub struct MsrcmParams {
    pub branches: Vec<MsrcmBranch>,
    pub out_conv: ConvParams,
    pub out_bn: BatchNormParams,
}

impl MsrcmParams {
    pub fn declare(p: &mut dyn ParamProvider, prefix: &str, c_in: usize, c_out: usize) -> Result<Self> {
        let branches = MSRCM_KERNELS
            .iter()
            .map(|&k| {
                Ok(MsrcmBranch {
                    conv: conv(p, &format!("{prefix}.branch{k}.conv"), c_in, c_in, (k, k))?,
                    bn: batch_norm(p, &format!("{prefix}.branch{k}.bn"), c_in)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(MsrcmParams {
            branches,
            out_conv: conv(p, &format!("{prefix}.out.conv"), c_out, c_in, (1, 1))?,
            out_bn: batch_norm(p, &format!("{prefix}.out.bn"), c_out)?,
        })
    }
}

/// `relu(bn(conv1x1(x + relu(sum_k bn_k(conv_k(x))))))`, branches summed in kernel order.
pub fn msrcm_forward(x: &Tensor, p: &MsrcmParams) -> Result<Tensor> {
    let mut sum: Option<Tensor> = None;
    for b in &p.branches {
        let y = batch_norm_infer(&conv2d(x, &b.conv)?, &b.bn)?;
        sum = Some(match sum {
            None => y,
            Some(acc) => acc.add(&y)?,
        });
    }
    let residual = match sum {
        Some(s) => x.add(&relu(&s))?,
        None => x.clone(),
    };
    Ok(relu(&batch_norm_infer(&conv2d(&residual, &p.out_conv)?, &p.out_bn)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Fill, FillProvider};
    use crate::tensor::Shape;

    fn input() -> Tensor {
        Tensor::from_fn(Shape::new(1, 4, 6, 5), |_, c, h, w| {
            ((c * 5 + h * 2 + w) % 9) as f32 - 4.0
        })
    }

    #[test]
    fn all_zero_parameters_give_zero() {
        let mut p = MsrcmParams::declare(&mut FillProvider::new(Fill::Zeros, 1e-5), "m", 4, 4).unwrap();
        for b in &mut p.branches {
            b.bn = BatchNormParams::identity(4, 0.0);
        }
        p.out_bn = BatchNormParams::identity(4, 0.0);
        assert!(msrcm_forward(&input(), &p).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_path_in_isolation() {
        let mut p = MsrcmParams::declare(&mut FillProvider::new(Fill::Zeros, 1e-5), "m", 4, 4).unwrap();
        for b in &mut p.branches {
            b.bn = BatchNormParams::identity(4, 0.0);
        }
        p.out_bn = BatchNormParams::identity(4, 0.0);
        let eye = Tensor::from_fn(Shape::new(4, 4, 1, 1), |o, i, _, _| (o == i) as u8 as f32);
        p.out_conv = ConvParams::same(eye, Some(vec![0.0; 4])).unwrap();
        let x = input();
        assert!(msrcm_forward(&x, &p).unwrap().bit_eq(&relu(&x)));
    }

    #[test]
    fn output_channels_follow_out_conv() {
        let p = MsrcmParams::declare(&mut FillProvider::new(Fill::Seeded(1), 1e-5), "m", 4, 6).unwrap();
        let y = msrcm_forward(&input(), &p).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 6, 6, 5));
        assert!(y.data().iter().all(|&v| v >= 0.0));
        assert!(msrcm_forward(&Tensor::zeros(Shape::new(1, 3, 4, 4)), &p).is_err());
    }
}
