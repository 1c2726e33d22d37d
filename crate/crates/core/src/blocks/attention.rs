use crate::error::Result;
use crate::nn::{channel_mean_max, conv2d, global_avg_pool, relu, sigmoid_tensor, ConvParams};
use crate::params::{conv, ParamProvider};
use crate::tensor::Tensor;

/// Squeeze-excitation style channel gate: two 1x1 convs around a ReLU.
#[derive(Clone, Debug)]
pub struct ChannelAttentionParams {
    pub fc1: ConvParams,
    pub fc2: ConvParams,
}

impl ChannelAttentionParams {
    pub fn declare(p: &mut dyn ParamProvider, prefix: &str, channels: usize, hidden: usize) -> Result<Self> {
        Ok(ChannelAttentionParams {
            fc1: conv(p, &format!("{prefix}.fc1"), hidden, channels, (1, 1))?,
            fc2: conv(p, &format!("{prefix}.fc2"), channels, hidden, (1, 1))?,
        })
    }
}

/// Spatial gate from a `k x k` conv over the channel mean and max maps.
#[derive(Clone, Debug)]
pub struct SpatialAttentionParams {
    pub conv: ConvParams,
}

impl SpatialAttentionParams {
    pub fn declare(p: &mut dyn ParamProvider, prefix: &str, kernel: usize) -> Result<Self> {
        Ok(SpatialAttentionParams {
            conv: conv(p, &format!("{prefix}.conv"), 1, 2, (kernel, kernel))?,
        })
    }
}

/// `x * sigmoid(fc2(relu(fc1(gap(x)))))`, one weight per channel.
pub fn channel_attention(x: &Tensor, p: &ChannelAttentionParams) -> Result<Tensor> {
    let squeezed = global_avg_pool(x)?;
    let hidden = relu(&conv2d(&squeezed, &p.fc1)?);
    let weights = sigmoid_tensor(&conv2d(&hidden, &p.fc2)?);
    x.mul(&weights)
}

/// `x * sigmoid(conv([mean_c(x), max_c(x)]))`, one weight per pixel.
pub fn spatial_attention(x: &Tensor, p: &SpatialAttentionParams) -> Result<Tensor> {
    let stats = channel_mean_max(x)?;
    let map = sigmoid_tensor(&conv2d(&stats, &p.conv)?);
    x.mul(&map)
}
