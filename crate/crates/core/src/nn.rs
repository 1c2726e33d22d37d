//! Inference-mode neural primitives.
//!
//! Reductions (pooling, softmax normalisers, weighted channel sums) accumulate
//! in `f64` in a fixed left-to-right order and round once to `f32`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Weights of a 2-D cross-correlation with zero padding.
#[derive(Clone, Debug)]
pub struct ConvParams {
    /// `(c_out, c_in, kh, kw)`.
    pub weight: Tensor,
    pub bias: Option<Vec<f32>>,
    pub stride: usize,
    /// `(rows, cols)` of zero padding added on each side.
    pub padding: (usize, usize),
}

impl ConvParams {
    pub fn new(weight: Tensor, bias: Option<Vec<f32>>, stride: usize, padding: (usize, usize)) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        if let Some(b) = &bias {
            if b.len() != weight.shape().n {
                return Err(Error::invalid(
                    "conv2d",
                    format!("bias length {} for {} output channels", b.len(), weight.shape().n),
                ));
            }
        }
        Ok(ConvParams {
            weight,
            bias,
            stride,
            padding,
        })
    }

    /// Stride 1 with "same" padding for an odd square kernel.
    pub fn same(weight: Tensor, bias: Option<Vec<f32>>) -> Result<Self> {
        let s = weight.shape();
        Self::new(weight, bias, 1, (s.h / 2, s.w / 2))
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape().n
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape().c
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape().h, self.weight.shape().w)
    }

    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel();
        let (ph, pw) = self.padding;
        let (hp, wp) = (h + 2 * ph, w + 2 * pw);
        if hp < kh || wp < kw {
            return None;
        }
        Some(((hp - kh) / self.stride + 1, (wp - kw) / self.stride + 1))
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormParams {
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub epsilon: f32,
}

impl BatchNormParams {
    pub fn new(
        scale: Vec<f32>,
        shift: Vec<f32>,
        running_mean: Vec<f32>,
        running_var: Vec<f32>,
        epsilon: f32,
    ) -> Result<Self> {
        let c = scale.len();
        if shift.len() != c || running_mean.len() != c || running_var.len() != c {
            return Err(Error::invalid("batch_norm", "parameter vectors differ in length"));
        }
        if running_var.iter().any(|&v| v.is_nan() || v < 0.0) {
            return Err(Error::invalid("batch_norm", "running_var must be non-negative"));
        }
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::invalid("batch_norm", "epsilon must be non-negative"));
        }
        Ok(BatchNormParams {
            scale,
            shift,
            running_mean,
            running_var,
            epsilon,
        })
    }

    /// scale 1, shift 0, mean 0, var 1.
    pub fn identity(channels: usize, epsilon: f32) -> Self {
        BatchNormParams {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolAxis {
    /// Average over rows: `(n, c, h, w) -> (n, c, 1, w)`.
    Height,
    /// Average over columns: `(n, c, h, w) -> (n, c, h, 1)`.
    Width,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsampleMode {
    Nearest,
    #[default]
    Bilinear,
}

/// Output elements produced per im2col chunk; bounds the scratch buffer.
const IM2COL_CHUNK: usize = 1 << 20;

/// Cross-correlation with zero padding, computed as im2col + sgemm.
pub fn conv2d(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let s = x.shape();
    if s.c != p.c_in() {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            left: s,
            right: p.weight.shape(),
        });
    }
    let (oh, ow) = p.output_size(s.h, s.w).ok_or_else(|| {
        Error::invalid(
            "conv2d",
            format!("kernel {:?} larger than padded input {s}", p.kernel()),
        )
    })?;
    let (kh, kw) = p.kernel();
    let (c_out, c_in) = (p.c_out(), p.c_in());
    let k = c_in * kh * kw;
    let out_shape = Shape::new(s.n, c_out, oh, ow);
    let mut out = vec![0.0f32; out_shape.numel()];
    let out_plane = oh * ow;

    let pointwise = kh == 1 && kw == 1 && p.padding == (0, 0) && p.stride == 1;
    let rows_per_chunk = (IM2COL_CHUNK / (k * ow).max(1)).clamp(1, oh.max(1));
    let mut cols = if pointwise {
        Vec::new()
    } else {
        vec![0.0f32; k * rows_per_chunk * ow]
    };

    for n in 0..s.n {
        let input = &x.data()[n * c_in * s.plane()..(n + 1) * c_in * s.plane()];
        let output = &mut out[n * c_out * out_plane..(n + 1) * c_out * out_plane];
        if pointwise {
            gemm(
                c_out,
                k,
                out_plane,
                p.weight.data(),
                input,
                out_plane,
                output,
                out_plane,
            );
            continue;
        }
        let mut y0 = 0;
        while y0 < oh {
            let rows = rows_per_chunk.min(oh - y0);
            let ncols = rows * ow;
            im2col(input, s, p, y0, rows, ow, &mut cols[..k * ncols]);
            gemm(
                c_out,
                k,
                ncols,
                p.weight.data(),
                &cols[..k * ncols],
                ncols,
                &mut output[y0 * ow..],
                out_plane,
            );
            y0 += rows;
        }
    }

    if let Some(bias) = &p.bias {
        for (plane, &b) in out.chunks_mut(out_plane).zip(bias.iter().cycle()) {
            plane.iter_mut().for_each(|v| *v += b);
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

/// Fills `cols` (row-major `(c_in*kh*kw) x (rows*ow)`) with the receptive
/// fields of output rows `y0..y0+rows`.
fn im2col(input: &[f32], s: Shape, p: &ConvParams, y0: usize, rows: usize, ow: usize, cols: &mut [f32]) {
    let (kh, kw) = p.kernel();
    let (ph, pw) = (p.padding.0 as isize, p.padding.1 as isize);
    let stride = p.stride as isize;
    let ncols = rows * ow;
    let (h, w) = (s.h as isize, s.w as isize);
    for ci in 0..s.c {
        let plane = &input[ci * s.plane()..(ci + 1) * s.plane()];
        for ky in 0..kh {
            for kx in 0..kw {
                let r = (ci * kh + ky) * kw + kx;
                let dst = &mut cols[r * ncols..(r + 1) * ncols];
                for (row, dst_row) in dst.chunks_mut(ow).enumerate() {
                    let iy = ((y0 + row) as isize) * stride + ky as isize - ph;
                    if iy < 0 || iy >= h {
                        dst_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * s.w..(iy as usize + 1) * s.w];
                    let base = kx as isize - pw;
                    if stride == 1 {
                        // valid output columns are those with 0 <= ox + base < w
                        let lo = (-base).clamp(0, ow as isize) as usize;
                        let hi = (w - base).clamp(lo as isize, ow as isize) as usize;
                        dst_row.fill(0.0);
                        if lo < hi {
                            dst_row[lo..hi]
                                .copy_from_slice(&src[(lo as isize + base) as usize..(hi as isize + base) as usize]);
                        }
                    } else {
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            let ix = ox as isize * stride + base;
                            *d = if ix >= 0 && ix < w { src[ix as usize] } else { 0.0 };
                        }
                    }
                }
            }
        }
    }
}

/// `c[m x n] = a[m x k] * b[k x n]`, all row-major; `c` rows are `ldc` apart.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], ldb: usize, c: &mut [f32], ldc: usize) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= m * k);
    assert!(k == 0 || b.len() >= (k - 1) * ldb + n);
    assert!(c.len() >= (m - 1) * ldc + n);
    if k == 0 {
        for row in 0..m {
            c[row * ldc..row * ldc + n].fill(0.0);
        }
        return;
    }
    // SAFETY: the asserts above bound every index the kernel touches given
    // the strides passed below.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            ldb as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

pub fn batch_norm_infer(x: &Tensor, p: &BatchNormParams) -> Result<Tensor> {
    let s = x.shape();
    if s.c != p.channels() {
        return Err(Error::invalid(
            "batch_norm_infer",
            format!("input {s} has {} channels, parameters have {}", s.c, p.channels()),
        ));
    }
    let mut out = x.clone();
    for n in 0..s.n {
        for c in 0..s.c {
            let denom = (p.running_var[c] + p.epsilon).sqrt();
            let (scale, shift, mean) = (p.scale[c], p.shift[c], p.running_mean[c]);
            for v in out.plane_mut(n, c) {
                *v = scale * (*v - mean) / denom + shift;
            }
        }
    }
    Ok(out)
}

#[inline]
pub fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

pub fn activate(x: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Relu => x.map(|v| v.max(0.0)),
        Activation::Sigmoid => x.map(sigmoid),
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    activate(x, Activation::Relu)
}

pub fn sigmoid_tensor(x: &Tensor) -> Tensor {
    activate(x, Activation::Sigmoid)
}

fn mean(values: impl Iterator<Item = f32>, count: usize) -> f32 {
    let sum: f64 = values.fold(0.0, |acc, v| acc + v as f64);
    (sum / count as f64) as f32
}

pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.plane() == 0 {
        return Err(Error::invalid(
            "global_avg_pool",
            format!("empty spatial extent in {s}"),
        ));
    }
    let out = Shape::new(s.n, s.c, 1, 1);
    let data = (0..s.n)
        .flat_map(|n| (0..s.c).map(move |c| (n, c)))
        .map(|(n, c)| mean(x.plane(n, c).iter().copied(), s.plane()))
        .collect();
    Ok(Tensor::from_parts(out, data))
}

pub fn directional_avg_pool(x: &Tensor, axis: PoolAxis) -> Tensor {
    let s = x.shape();
    match axis {
        PoolAxis::Height => Tensor::from_fn(Shape::new(s.n, s.c, 1, s.w), |n, c, _, w| {
            let plane = x.plane(n, c);
            mean((0..s.h).map(|h| plane[h * s.w + w]), s.h)
        }),
        PoolAxis::Width => Tensor::from_fn(Shape::new(s.n, s.c, s.h, 1), |n, c, h, _| {
            mean(x.plane(n, c)[h * s.w..(h + 1) * s.w].iter().copied(), s.w)
        }),
    }
}

/// Source taps `(i0, i1, frac)` for half-pixel bilinear resampling of one axis.
fn bilinear_taps(size: usize, factor: usize) -> Vec<(usize, usize, f32)> {
    let max = (size - 1) as f32;
    (0..size * factor)
        .map(|t| {
            let src = ((t as f32 + 0.5) / factor as f32 - 0.5).clamp(0.0, max);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(size - 1);
            (i0, i1, src - i0 as f32)
        })
        .collect()
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    // exact when a == b, so constant maps stay constant
    a + t * (b - a)
}

pub fn upsample(x: &Tensor, factor: usize, mode: UpsampleMode) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::invalid("upsample", "factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let s = x.shape();
    let out = Shape::new(s.n, s.c, s.h * factor, s.w * factor);
    if s.plane() == 0 {
        return Ok(Tensor::zeros(out));
    }
    let mut data = Vec::with_capacity(out.numel());
    match mode {
        UpsampleMode::Nearest => {
            for n in 0..s.n {
                for c in 0..s.c {
                    let plane = x.plane(n, c);
                    for i in 0..out.h {
                        let row = &plane[(i / factor) * s.w..][..s.w];
                        data.extend((0..out.w).map(|j| row[j / factor]));
                    }
                }
            }
        }
        UpsampleMode::Bilinear => {
            let ty = bilinear_taps(s.h, factor);
            let tx = bilinear_taps(s.w, factor);
            for n in 0..s.n {
                for c in 0..s.c {
                    let plane = x.plane(n, c);
                    for &(y0, y1, fy) in &ty {
                        let r0 = &plane[y0 * s.w..][..s.w];
                        let r1 = &plane[y1 * s.w..][..s.w];
                        data.extend(
                            tx.iter()
                                .map(|&(x0, x1, fx)| lerp(lerp(r0[x0], r0[x1], fx), lerp(r1[x0], r1[x1], fx), fy)),
                        );
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(out, data))
}

/// Softmax over the channel axis at every `(n, h, w)` site.
pub fn softmax_channels(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.c == 0 {
        return Err(Error::invalid("softmax_channels", "no channels"));
    }
    let mut out = vec![0.0f32; s.numel()];
    let plane = s.plane();
    let mut exps = vec![0.0f64; s.c];
    for n in 0..s.n {
        for site in 0..plane {
            let idx = |c: usize| (n * s.c + c) * plane + site;
            let max = (0..s.c).map(|c| x.data()[idx(c)]).fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0f64;
            for (c, e) in exps.iter_mut().enumerate() {
                *e = ((x.data()[idx(c)] - max) as f64).exp();
                sum += *e;
            }
            for (c, e) in exps.iter().enumerate() {
                out[idx(c)] = (e / sum) as f32;
            }
        }
    }
    Ok(Tensor::from_parts(s, out))
}

pub fn max_pool_2x2(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
        return Err(Error::invalid("max_pool_2x2", format!("odd spatial size in {s}")));
    }
    Ok(Tensor::from_fn(Shape::new(s.n, s.c, s.h / 2, s.w / 2), |n, c, h, w| {
        let plane = x.plane(n, c);
        let (r0, r1) = (2 * h * s.w, (2 * h + 1) * s.w);
        plane[r0 + 2 * w]
            .max(plane[r0 + 2 * w + 1])
            .max(plane[r1 + 2 * w])
            .max(plane[r1 + 2 * w + 1])
    }))
}

/// Per-site channel mean and channel max, stacked as two channels.
pub fn channel_mean_max(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.c == 0 {
        return Err(Error::invalid("channel_mean_max", "no channels"));
    }
    Ok(Tensor::from_fn(Shape::new(s.n, 2, s.h, s.w), |n, k, h, w| {
        let vals = (0..s.c).map(|c| x.at(n, c, h, w));
        if k == 0 {
            mean(vals, s.c)
        } else {
            vals.fold(f32::NEG_INFINITY, f32::max)
        }
    }))
}

/// `out(n, 0, p) = sum_c weights(n, c) * x(n, c, p)`.
pub fn channel_weighted_sum(x: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (s, ws) = (x.shape(), weights.shape());
    if ws != Shape::new(s.n, s.c, 1, 1) {
        return Err(Error::ShapeMismatch {
            op: "channel_weighted_sum",
            left: s,
            right: ws,
        });
    }
    Ok(Tensor::from_fn(s.with_channels(1), |n, _, h, w| {
        let sum: f64 = (0..s.c).fold(0.0, |acc, c| {
            acc + weights.at(n, c, 0, 0) as f64 * x.at(n, c, h, w) as f64
        });
        sum as f32
    }))
}
