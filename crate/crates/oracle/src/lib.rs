//! Brute-force reference implementations for checking `dcffs-core`.
//!
//! Everything here is written as plain nested loops over `f64` values and
//! shares no kernels with the main crate; only the `Tensor`, mask, weight
//! store and config types are reused as data carriers. Intended for tests on
//! small dims only.

#![allow(clippy::needless_range_loop)]

use dcffs_core::blocks::GatePlacement;
use dcffs_core::connectivity::{decode_mask, encode_connectivity, BinaryMask, BoundaryConvention, ShiftFill};
use dcffs_core::network::NetworkConfig;
use dcffs_core::nn::{ConvParams, UpsampleMode};
use dcffs_core::weights::WeightStore;
use dcffs_core::{Shape, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("unknown block id `{0}`")]
    UnknownBlock(String),
    #[error("weight `{0}` not in store")]
    MissingWeight(String),
    #[error("{0}")]
    Shape(String),
}

type Result<T> = std::result::Result<T, OracleError>;

/// `(dy, dx)` of directions 1..8: top-left, top, top-right, left, right,
/// bottom-left, bottom, bottom-right.
pub const DIRECTIONS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Dense `f64` NCHW array.
#[derive(Clone, Debug)]
pub struct Arr {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Arr {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Arr {
        Arr {
            n,
            c,
            h,
            w,
            v: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Arr {
        let s = t.shape();
        Arr {
            n: s.n,
            c: s.c,
            h: s.h,
            w: s.w,
            v: t.data().iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            Shape::new(self.n, self.c, self.h, self.w),
            self.v.iter().map(|&x| x as f32).collect(),
        )
        .unwrap()
    }

    fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.v[self.idx(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f64) {
        let i = self.idx(n, c, y, x);
        self.v[i] = value;
    }

    fn same_dims(&self, o: &Arr) -> bool {
        (self.n, self.c, self.h, self.w) == (o.n, o.c, o.h, o.w)
    }
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

// ---------------------------------------------------------------- primitives

/// Zero-padded cross-correlation, one output element at a time.
pub fn naive_conv(x: &Arr, weight: &Arr, bias: Option<&[f64]>, stride: usize, pad: (usize, usize)) -> Result<Arr> {
    if x.c != weight.c {
        return Err(OracleError::Shape(format!(
            "conv: input has {} channels, kernel expects {}",
            x.c, weight.c
        )));
    }
    let (kh, kw) = (weight.h, weight.w);
    if x.h + 2 * pad.0 < kh || x.w + 2 * pad.1 < kw || stride == 0 {
        return Err(OracleError::Shape("conv: kernel larger than padded input".into()));
    }
    let oh = (x.h + 2 * pad.0 - kh) / stride + 1;
    let ow = (x.w + 2 * pad.1 - kw) / stride + 1;
    let mut out = Arr::zeros(x.n, weight.n, oh, ow);
    for n in 0..x.n {
        for o in 0..weight.n {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = 0.0;
                    for i in 0..x.c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let sy = (y * stride + ky) as isize - pad.0 as isize;
                                let sx = (xx * stride + kx) as isize - pad.1 as isize;
                                if sy < 0 || sx < 0 || sy >= x.h as isize || sx >= x.w as isize {
                                    continue;
                                }
                                acc += x.get(n, i, sy as usize, sx as usize) * weight.get(o, i, ky, kx);
                            }
                        }
                    }
                    if let Some(b) = bias {
                        acc += b[o];
                    }
                    out.set(n, o, y, xx, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Same contract as the main-path `conv2d`.
pub fn naive_conv2d(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let bias: Option<Vec<f64>> = p.bias.as_ref().map(|b| b.iter().map(|&v| v as f64).collect());
    let out = naive_conv(
        &Arr::from_tensor(x),
        &Arr::from_tensor(&p.weight),
        bias.as_deref(),
        p.stride,
        p.padding,
    )?;
    Ok(out.to_tensor())
}

pub fn naive_batch_norm(x: &Arr, scale: &[f64], shift: &[f64], mean: &[f64], var: &[f64], eps: f64) -> Arr {
    let mut out = x.clone();
    for n in 0..x.n {
        for c in 0..x.c {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let v = x.get(n, c, y, xx);
                    out.set(n, c, y, xx, scale[c] * (v - mean[c]) / (var[c] + eps).sqrt() + shift[c]);
                }
            }
        }
    }
    out
}

pub fn naive_map(x: &Arr, f: impl Fn(f64) -> f64) -> Arr {
    let mut out = x.clone();
    for v in out.v.iter_mut() {
        *v = f(*v);
    }
    out
}

pub fn naive_relu(x: &Arr) -> Arr {
    naive_map(x, |v| if v > 0.0 { v } else { 0.0 })
}

pub fn naive_sigmoid(x: &Arr) -> Arr {
    naive_map(x, sig)
}

/// Elementwise product or sum with `b` broadcast along any axis of size 1.
pub fn naive_broadcast(a: &Arr, b: &Arr, mul: bool) -> Arr {
    let mut out = a.clone();
    for n in 0..a.n {
        for c in 0..a.c {
            for y in 0..a.h {
                for x in 0..a.w {
                    let bv = b.get(
                        if b.n == 1 { 0 } else { n },
                        if b.c == 1 { 0 } else { c },
                        if b.h == 1 { 0 } else { y },
                        if b.w == 1 { 0 } else { x },
                    );
                    let av = a.get(n, c, y, x);
                    out.set(n, c, y, x, if mul { av * bv } else { av + bv });
                }
            }
        }
    }
    out
}

pub fn naive_add(a: &Arr, b: &Arr) -> Arr {
    naive_broadcast(a, b, false)
}

pub fn naive_mul(a: &Arr, b: &Arr) -> Arr {
    naive_broadcast(a, b, true)
}

pub fn naive_gap(x: &Arr) -> Arr {
    let mut out = Arr::zeros(x.n, x.c, 1, 1);
    for n in 0..x.n {
        for c in 0..x.c {
            let mut s = 0.0;
            for y in 0..x.h {
                for xx in 0..x.w {
                    s += x.get(n, c, y, xx);
                }
            }
            out.set(n, c, 0, 0, s / (x.h * x.w) as f64);
        }
    }
    out
}

pub fn naive_max_pool2(x: &Arr) -> Arr {
    let mut out = Arr::zeros(x.n, x.c, x.h / 2, x.w / 2);
    for n in 0..x.n {
        for c in 0..x.c {
            for y in 0..x.h / 2 {
                for xx in 0..x.w / 2 {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(x.get(n, c, 2 * y + dy, 2 * xx + dx));
                        }
                    }
                    out.set(n, c, y, xx, m);
                }
            }
        }
    }
    out
}

fn bilinear_source(t: usize, factor: usize, size: usize) -> (usize, usize, f64) {
    let mut src = (t as f64 + 0.5) / factor as f64 - 0.5;
    if src < 0.0 {
        src = 0.0;
    }
    if src > (size - 1) as f64 {
        src = (size - 1) as f64;
    }
    let lo = src.floor() as usize;
    let hi = if lo + 1 < size { lo + 1 } else { size - 1 };
    (lo, hi, src - lo as f64)
}

/// Nearest replicates each pixel; bilinear uses half-pixel centres with edge clamping.
pub fn naive_upsample(x: &Arr, factor: usize, mode: UpsampleMode) -> Arr {
    let mut out = Arr::zeros(x.n, x.c, x.h * factor, x.w * factor);
    for n in 0..x.n {
        for c in 0..x.c {
            for y in 0..x.h * factor {
                for xx in 0..x.w * factor {
                    let v = match mode {
                        UpsampleMode::Nearest => x.get(n, c, y / factor, xx / factor),
                        UpsampleMode::Bilinear => {
                            let (y0, y1, fy) = bilinear_source(y, factor, x.h);
                            let (x0, x1, fx) = bilinear_source(xx, factor, x.w);
                            (1.0 - fy) * ((1.0 - fx) * x.get(n, c, y0, x0) + fx * x.get(n, c, y0, x1))
                                + fy * ((1.0 - fx) * x.get(n, c, y1, x0) + fx * x.get(n, c, y1, x1))
                        }
                    };
                    out.set(n, c, y, xx, v);
                }
            }
        }
    }
    out
}

/// `out(p) = x(p + offset(dir))`, reading 0 or the clamped edge outside.
pub fn naive_shift(x: &Arr, dir: usize, fill: ShiftFill) -> Arr {
    let (dy, dx) = DIRECTIONS[dir];
    let mut out = Arr::zeros(x.n, x.c, x.h, x.w);
    for n in 0..x.n {
        for c in 0..x.c {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let sy = y as isize + dy;
                    let sx = xx as isize + dx;
                    let inside = sy >= 0 && sx >= 0 && sy < x.h as isize && sx < x.w as isize;
                    let v = if inside {
                        x.get(n, c, sy as usize, sx as usize)
                    } else {
                        match fill {
                            ShiftFill::Zero => 0.0,
                            ShiftFill::Replicate => x.get(
                                n,
                                c,
                                sy.clamp(0, x.h as isize - 1) as usize,
                                sx.clamp(0, x.w as isize - 1) as usize,
                            ),
                        }
                    };
                    out.set(n, c, y, xx, v);
                }
            }
        }
    }
    out
}

pub fn naive_slice_channels(x: &Arr, from: usize, count: usize) -> Arr {
    let mut out = Arr::zeros(x.n, count, x.h, x.w);
    for n in 0..x.n {
        for c in 0..count {
            for y in 0..x.h {
                for xx in 0..x.w {
                    out.set(n, c, y, xx, x.get(n, from + c, y, xx));
                }
            }
        }
    }
    out
}

pub fn naive_concat(parts: &[Arr]) -> Arr {
    let total: usize = parts.iter().map(|p| p.c).sum();
    let f = &parts[0];
    let mut out = Arr::zeros(f.n, total, f.h, f.w);
    let mut base = 0;
    for p in parts {
        for n in 0..p.n {
            for c in 0..p.c {
                for y in 0..p.h {
                    for x in 0..p.w {
                        out.set(n, base + c, y, x, p.get(n, c, y, x));
                    }
                }
            }
        }
        base += p.c;
    }
    out
}

fn groups_of(x: &Arr) -> Vec<Arr> {
    let g = x.c / 8;
    (0..8).map(|i| naive_slice_channels(x, i * g, g)).collect()
}

// ---------------------------------------------------------------- connectivity

pub fn naive_encode(y: &BinaryMask, conv: BoundaryConvention) -> Arr {
    let (h, w) = (y.height(), y.width());
    let mut out = Arr::zeros(1, 8, h, w);
    for py in 0..h {
        for px in 0..w {
            let own = y.data()[py * w + px] == 1;
            for (i, (dy, dx)) in DIRECTIONS.iter().enumerate() {
                let ny = py as isize + dy;
                let nx = px as isize + dx;
                let inside = ny >= 0 && nx >= 0 && ny < h as isize && nx < w as isize;
                let on = if inside {
                    own && y.data()[ny as usize * w + nx as usize] == 1
                } else {
                    match conv {
                        BoundaryConvention::ClassicZero => false,
                        BoundaryConvention::SameAsSelf => own,
                    }
                };
                out.set(0, i, py, px, if on { 1.0 } else { 0.0 });
            }
        }
    }
    out
}

/// Channel `i` times channel `7 - i` (0-based) at the neighbour. Outside the
/// image the partner is the entry itself when `self_pair`, else 1.
pub fn naive_bilateral_vote(x: &Arr, self_pair: bool) -> Arr {
    let mut out = x.clone();
    for n in 0..x.n {
        for i in 0..8 {
            let (dy, dx) = DIRECTIONS[i];
            for y in 0..x.h {
                for xx in 0..x.w {
                    let ny = y as isize + dy;
                    let nx = xx as isize + dx;
                    let own = x.get(n, i, y, xx);
                    let partner = if ny >= 0 && nx >= 0 && ny < x.h as isize && nx < x.w as isize {
                        x.get(n, 7 - i, ny as usize, nx as usize)
                    } else if self_pair {
                        own
                    } else {
                        1.0
                    };
                    out.set(n, i, y, xx, own * partner);
                }
            }
        }
    }
    out
}

pub fn naive_rca(x: &Arr) -> Arr {
    let mut out = Arr::zeros(x.n, 1, x.h, x.w);
    for n in 0..x.n {
        for y in 0..x.h {
            for xx in 0..x.w {
                let mut m = x.get(n, 0, y, xx);
                for c in 1..x.c {
                    if x.get(n, c, y, xx) > m {
                        m = x.get(n, c, y, xx);
                    }
                }
                out.set(n, 0, y, xx, m);
            }
        }
    }
    out
}

pub fn naive_decode(x: &Arr, threshold: f64, self_pair: bool) -> BinaryMask {
    let agg = naive_rca(&naive_bilateral_vote(x, self_pair));
    BinaryMask::from_fn(x.h, x.w, |y, xx| agg.get(0, 0, y, xx) >= threshold)
}

/// Every foreground pixel has a foreground neighbour, or sits on the border
/// under same-as-self.
pub fn roundtrip_condition(y: &BinaryMask, conv: BoundaryConvention) -> bool {
    let (h, w) = (y.height(), y.width());
    for py in 0..h {
        for px in 0..w {
            if y.data()[py * w + px] == 0 {
                continue;
            }
            let mut ok = false;
            for (dy, dx) in DIRECTIONS {
                let ny = py as isize + dy;
                let nx = px as isize + dx;
                if ny >= 0 && nx >= 0 && ny < h as isize && nx < w as isize {
                    ok |= y.data()[ny as usize * w + nx as usize] == 1;
                } else {
                    ok |= conv == BoundaryConvention::SameAsSelf;
                }
            }
            if !ok {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Debug, Default)]
pub struct RoundTripReport {
    pub masks_checked: usize,
    pub eligible: usize,
    /// Eligible masks that did not survive encode then decode, on either path.
    pub violations: Vec<BinaryMask>,
    /// Ineligible masks that, as expected, did not survive.
    pub known_failures: Vec<BinaryMask>,
    /// Ineligible masks that survived anyway (the condition would be too strict).
    pub unexpected_successes: Vec<BinaryMask>,
}

/// Checks one mask through both the main path and the naive path at threshold 0.5.
pub fn check_roundtrip(y: &BinaryMask, conv: BoundaryConvention, report: &mut RoundTripReport) {
    report.masks_checked += 1;
    let main = decode_mask(&encode_connectivity(y, conv), 0.5).expect("valid threshold");
    let naive = naive_decode(&naive_encode(y, conv), 0.5, true);
    let survived = main == *y && naive == *y;
    if roundtrip_condition(y, conv) {
        report.eligible += 1;
        if !survived {
            report.violations.push(y.clone());
        }
    } else if survived {
        report.unexpected_successes.push(y.clone());
    } else {
        report.known_failures.push(y.clone());
    }
}

/// All `2^(h*w)` masks of size `h x w`, with `h*w <= 9`.
pub fn enumerate_roundtrip(h: usize, w: usize, conv: BoundaryConvention) -> RoundTripReport {
    assert!(h * w <= 9, "enumeration is limited to 9 pixels");
    let mut report = RoundTripReport::default();
    for bits in 0u32..(1 << (h * w)) {
        let y = BinaryMask::from_fn(h, w, |py, px| bits >> (py * w + px) & 1 == 1);
        check_roundtrip(&y, conv, &mut report);
    }
    report
}

// ---------------------------------------------------------------- blocks

/// Reads block parameters by dotted name from a store.
pub struct Weights<'a> {
    pub store: &'a WeightStore,
    pub epsilon: f64,
}

impl Weights<'_> {
    fn tensor(&self, name: &str) -> Result<Arr> {
        self.store
            .get(name)
            .map(Arr::from_tensor)
            .ok_or_else(|| OracleError::MissingWeight(name.to_string()))
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.tensor(name)?.v)
    }

    /// Stride-1 conv with "same"-style padding `(kh/2, kw/2)`.
    pub fn conv(&self, name: &str, x: &Arr) -> Result<Arr> {
        let w = self.tensor(&format!("{name}.weight"))?;
        let b = self.vector(&format!("{name}.bias"))?;
        let pad = (w.h / 2, w.w / 2);
        naive_conv(x, &w, Some(&b), 1, pad)
    }

    pub fn bn(&self, name: &str, x: &Arr) -> Result<Arr> {
        Ok(naive_batch_norm(
            x,
            &self.vector(&format!("{name}.scale"))?,
            &self.vector(&format!("{name}.shift"))?,
            &self.vector(&format!("{name}.running_mean"))?,
            &self.vector(&format!("{name}.running_var"))?,
            self.epsilon,
        ))
    }
}

pub fn oracle_cam(wt: &Weights, prefix: &str, x: &Arr) -> Result<Arr> {
    let hidden = naive_relu(&wt.conv(&format!("{prefix}.fc1"), &naive_gap(x))?);
    let gate = naive_sigmoid(&wt.conv(&format!("{prefix}.fc2"), &hidden)?);
    Ok(naive_mul(x, &gate))
}

pub fn oracle_sam(wt: &Weights, prefix: &str, x: &Arr) -> Result<Arr> {
    let mut stats = Arr::zeros(x.n, 2, x.h, x.w);
    for n in 0..x.n {
        for y in 0..x.h {
            for xx in 0..x.w {
                let mut sum = 0.0;
                let mut max = f64::NEG_INFINITY;
                for c in 0..x.c {
                    let v = x.get(n, c, y, xx);
                    sum += v;
                    max = max.max(v);
                }
                stats.set(n, 0, y, xx, sum / x.c as f64);
                stats.set(n, 1, y, xx, max);
            }
        }
    }
    let gate = naive_sigmoid(&wt.conv(&format!("{prefix}.conv"), &stats)?);
    Ok(naive_mul(x, &gate))
}

pub struct DscrimSettings {
    pub shift_fill: ShiftFill,
    pub upsample: UpsampleMode,
    pub gate: GatePlacement,
}

/// Returns `(c5, p_out)`.
pub fn oracle_dscrim(wt: &Weights, prefix: &str, f5: &Arr, s: &DscrimSettings) -> Result<(Arr, Arr)> {
    if !f5.c.is_multiple_of(8) || f5.c == 0 {
        return Err(OracleError::Shape(format!("{} channels not divisible by 8", f5.c)));
    }
    let head = wt.conv(&format!("{prefix}.pre.conv1x1"), f5)?;
    let p_out = wt.conv(&format!("{prefix}.out.conv1x1"), &naive_upsample(&head, 32, s.upsample))?;
    let p_add = naive_sigmoid(&wt.conv(&format!("{prefix}.padd.conv1x1"), &naive_gap(&p_out))?);
    let gates = groups_of(&p_add);
    let mut fused = Vec::new();
    for (i, g) in groups_of(f5).iter().enumerate() {
        let p = format!("{prefix}.group{}", i + 1);
        let x = naive_shift(g, i, s.shift_fill);
        let sam = oracle_sam(wt, &format!("{p}.sam"), &x)?;
        let cam = oracle_cam(wt, &format!("{p}.cam"), &x)?;
        let mixed = match s.gate {
            GatePlacement::Fused => naive_mul(&naive_add(&sam, &cam), &gates[i]),
            GatePlacement::ChannelOnly => naive_add(&sam, &naive_mul(&cam, &gates[i])),
        };
        fused.push(naive_add(&x, &wt.conv(&format!("{p}.fuse.conv1x1"), &mixed)?));
    }
    let c5 = wt.conv(&format!("{prefix}.post.conv1x1"), &naive_concat(&fused))?;
    Ok((c5, p_out))
}

/// Returns `(c_next, f_next)`.
pub fn oracle_msffm(wt: &Weights, prefix: &str, f: &Arr, c: &Arr) -> Result<(Arr, Arr)> {
    if !f.same_dims(c) || !f.c.is_multiple_of(8) || f.c == 0 {
        return Err(OracleError::Shape(
            "msffm inputs differ or are not divisible by 8".into(),
        ));
    }
    let (h, w) = (f.h, f.w);
    let mut c_out = Vec::new();
    let mut f_out = Vec::new();
    for (i, (fi, ci)) in groups_of(f).iter().zip(groups_of(c).iter()).enumerate() {
        let p = format!("{prefix}.group{}", i + 1);
        let g = fi.c;
        // strip: column means then row means, side by side
        let mut strip = Arr::zeros(f.n, g, 1, w + h);
        for n in 0..f.n {
            for ch in 0..g {
                for xx in 0..w {
                    let mut s = 0.0;
                    for y in 0..h {
                        s += fi.get(n, ch, y, xx);
                    }
                    strip.set(n, ch, 0, xx, s / h as f64);
                }
                for y in 0..h {
                    let mut s = 0.0;
                    for xx in 0..w {
                        s += fi.get(n, ch, y, xx);
                    }
                    strip.set(n, ch, 0, w + y, s / w as f64);
                }
            }
        }
        let gates = naive_sigmoid(&wt.conv(&format!("{p}.strip"), &strip)?);
        let mut gated = fi.clone();
        for n in 0..f.n {
            for ch in 0..g {
                for y in 0..h {
                    for xx in 0..w {
                        let v = fi.get(n, ch, y, xx) * gates.get(n, ch, 0, w + y) * gates.get(n, ch, 0, xx);
                        gated.set(n, ch, y, xx, v);
                    }
                }
            }
        }
        let x_f = wt.bn(&format!("{p}.bn_f"), &gated)?;
        let x_c = wt.bn(&format!("{p}.bn_c"), &wt.conv(&format!("{p}.conv3x3"), ci)?)?;

        let weighted = |desc_src: &Arr, feats: &Arr| -> Arr {
            let d = naive_gap(desc_src);
            let mut out = Arr::zeros(f.n, 1, h, w);
            for n in 0..f.n {
                let mut z = 0.0;
                let mut e = vec![0.0; g];
                for ch in 0..g {
                    e[ch] = d.get(n, ch, 0, 0).exp();
                    z += e[ch];
                }
                for y in 0..h {
                    for xx in 0..w {
                        let mut s = 0.0;
                        for ch in 0..g {
                            s += e[ch] / z * feats.get(n, ch, y, xx);
                        }
                        out.set(n, 0, y, xx, s);
                    }
                }
            }
            out
        };
        let w_fc = weighted(&x_f, &x_c);
        let w_cf = weighted(&x_c, &x_f);
        let gate = naive_sigmoid(&naive_add(&w_cf, &w_fc));
        c_out.push(naive_mul(ci, &gate));
        f_out.push(naive_mul(fi, &gate));
    }
    Ok((naive_concat(&c_out), naive_concat(&f_out)))
}

pub fn oracle_msrcm(wt: &Weights, prefix: &str, x: &Arr) -> Result<Arr> {
    let mut sum = Arr::zeros(x.n, x.c, x.h, x.w);
    for k in [1, 3, 5, 7] {
        let b = wt.bn(
            &format!("{prefix}.branch{k}.bn"),
            &wt.conv(&format!("{prefix}.branch{k}.conv"), x)?,
        )?;
        sum = naive_add(&sum, &b);
    }
    let inner = naive_add(x, &naive_relu(&sum));
    Ok(naive_relu(&wt.bn(
        &format!("{prefix}.out.bn"),
        &wt.conv(&format!("{prefix}.out.conv"), &inner)?,
    )?))
}

pub fn oracle_pconv(wt: &Weights, prefix: &str, x: &Arr, fill: ShiftFill) -> Result<Arr> {
    if !x.c.is_multiple_of(8) || x.c == 0 {
        return Err(OracleError::Shape(format!("{} channels not divisible by 8", x.c)));
    }
    let mut parts = Vec::new();
    for (i, g) in groups_of(x).iter().enumerate() {
        parts.push(wt.conv(&format!("{prefix}.shared"), &naive_shift(g, i, fill))?);
    }
    let merged = naive_relu(&wt.bn(&format!("{prefix}.bn"), &naive_concat(&parts))?);
    wt.conv(&format!("{prefix}.out"), &merged)
}

/// Whole network; returns post-sigmoid `(output1, output2)`.
pub fn oracle_network(store: &WeightStore, cfg: &NetworkConfig, image: &Arr) -> Result<(Arr, Arr)> {
    let wt = Weights {
        store,
        epsilon: cfg.bn_epsilon as f64,
    };
    let mut skips = Vec::new();
    let mut x = image.clone();
    for k in 1..=5 {
        let y = naive_relu(&wt.bn(&format!("enc{k}.bn1"), &wt.conv(&format!("enc{k}.conv1"), &x)?)?);
        let f = naive_relu(&wt.bn(&format!("enc{k}.bn2"), &wt.conv(&format!("enc{k}.conv2"), &y)?)?);
        x = naive_max_pool2(&f);
        skips.push(f);
    }
    let settings = DscrimSettings {
        shift_fill: cfg.shift_fill,
        upsample: cfg.upsample_mode,
        gate: cfg.gate_placement,
    };
    let (c5, p_out) = oracle_dscrim(&wt, "dscrim", &x, &settings)?;
    let mut stream = c5;
    for k in (1..=5).rev() {
        let up = naive_upsample(&wt.conv(&format!("dec{k}.reduce"), &stream)?, 2, cfg.upsample_mode);
        let (c_next, f_next) = oracle_msffm(&wt, &format!("dec{k}.msffm"), &skips[k - 1], &up)?;
        let input = if k == 1 { naive_add(&c_next, &f_next) } else { c_next };
        stream = oracle_msrcm(&wt, &format!("dec{k}.msrcm"), &input)?;
    }
    let head = oracle_pconv(&wt, "head", &stream, cfg.shift_fill)?;
    Ok((naive_sigmoid(&p_out), naive_sigmoid(&head)))
}

/// Runs block `block_id` by literal composition of the naive primitives.
///
/// | id       | inputs      | outputs              |
/// |----------|-------------|----------------------|
/// | cam, sam | `x`         | `y`                  |
/// | dscrim   | `f5`        | `c5, p_out`          |
/// | msffm    | `f, c`      | `c_next, f_next`     |
/// | msrcm    | `x`         | `y`                  |
/// | pconv    | `x`         | `y`                  |
/// | network  | `image`     | `output1, output2`   |
///
/// `prefix` is the dotted parameter prefix; it is ignored for `network`.
/// Batch-norm epsilon and the non-learned switches come from `cfg`.
pub fn compose_block_oracle(
    block_id: &str,
    store: &WeightStore,
    cfg: &NetworkConfig,
    prefix: &str,
    inputs: &[&Tensor],
) -> Result<Vec<Tensor>> {
    let wt = Weights {
        store,
        epsilon: cfg.bn_epsilon as f64,
    };
    let arg = |i: usize| -> Result<Arr> {
        inputs
            .get(i)
            .map(|t| Arr::from_tensor(t))
            .ok_or_else(|| OracleError::Shape(format!("{block_id} needs input {i}")))
    };
    let out = match block_id {
        "cam" => vec![oracle_cam(&wt, prefix, &arg(0)?)?],
        "sam" => vec![oracle_sam(&wt, prefix, &arg(0)?)?],
        "dscrim" => {
            let s = DscrimSettings {
                shift_fill: cfg.shift_fill,
                upsample: cfg.upsample_mode,
                gate: cfg.gate_placement,
            };
            let (a, b) = oracle_dscrim(&wt, prefix, &arg(0)?, &s)?;
            vec![a, b]
        }
        "msffm" => {
            let (a, b) = oracle_msffm(&wt, prefix, &arg(0)?, &arg(1)?)?;
            vec![a, b]
        }
        "msrcm" => vec![oracle_msrcm(&wt, prefix, &arg(0)?)?],
        "pconv" => vec![oracle_pconv(&wt, prefix, &arg(0)?, cfg.shift_fill)?],
        "network" => {
            let (a, b) = oracle_network(store, cfg, &arg(0)?)?;
            vec![a, b]
        }
        other => return Err(OracleError::UnknownBlock(other.to_string())),
    };
    Ok(out.iter().map(Arr::to_tensor).collect())
}

// ---------------------------------------------------------------- names

/// Every parameter name and dims the network should declare, written out
/// from the documented naming scheme.
pub fn expected_param_specs(cfg: &NetworkConfig) -> Vec<(String, [usize; 4])> {
    let mut out = Vec::new();
    let conv = |out: &mut Vec<_>, name: String, co: usize, ci: usize, kh: usize, kw: usize| {
        out.push((format!("{name}.weight"), [co, ci, kh, kw]));
        out.push((format!("{name}.bias"), [1, co, 1, 1]));
    };
    let bn = |out: &mut Vec<_>, name: String, c: usize| {
        for s in ["scale", "shift", "running_mean", "running_var"] {
            out.push((format!("{name}.{s}"), [1, c, 1, 1]));
        }
    };
    let e = &cfg.encoder_channels;
    let mut ci = 3;
    for k in 0..5 {
        conv(&mut out, format!("enc{}.conv1", k + 1), e[k], ci, 3, 3);
        bn(&mut out, format!("enc{}.bn1", k + 1), e[k]);
        conv(&mut out, format!("enc{}.conv2", k + 1), e[k], e[k], 3, 3);
        bn(&mut out, format!("enc{}.bn2", k + 1), e[k]);
        ci = e[k];
    }
    let c5 = e[4];
    let g5 = c5 / 8;
    let mid = c5 / 8;
    let hidden = std::cmp::max(1, g5 / cfg.cam_reduction);
    conv(&mut out, "dscrim.pre.conv1x1".into(), mid, c5, 1, 1);
    conv(&mut out, "dscrim.out.conv1x1".into(), 8, mid, 1, 1);
    conv(&mut out, "dscrim.padd.conv1x1".into(), c5, 8, 1, 1);
    for i in 1..=8 {
        conv(&mut out, format!("dscrim.group{i}.cam.fc1"), hidden, g5, 1, 1);
        conv(&mut out, format!("dscrim.group{i}.cam.fc2"), g5, hidden, 1, 1);
        conv(
            &mut out,
            format!("dscrim.group{i}.sam.conv"),
            1,
            2,
            cfg.sam_kernel,
            cfg.sam_kernel,
        );
        conv(&mut out, format!("dscrim.group{i}.fuse.conv1x1"), g5, g5, 1, 1);
    }
    conv(&mut out, "dscrim.post.conv1x1".into(), c5, c5, 1, 1);
    for k in (1..=5).rev() {
        let c = e[k - 1];
        let from = if k == 5 { c5 } else { e[k] };
        let g = c / 8;
        conv(&mut out, format!("dec{k}.reduce"), c, from, 1, 1);
        for i in 1..=8 {
            conv(&mut out, format!("dec{k}.msffm.group{i}.strip"), g, g, 1, 3);
            bn(&mut out, format!("dec{k}.msffm.group{i}.bn_f"), g);
            conv(&mut out, format!("dec{k}.msffm.group{i}.conv3x3"), g, g, 3, 3);
            bn(&mut out, format!("dec{k}.msffm.group{i}.bn_c"), g);
        }
        for b in [1, 3, 5, 7] {
            conv(&mut out, format!("dec{k}.msrcm.branch{b}.conv"), c, c, b, b);
            bn(&mut out, format!("dec{k}.msrcm.branch{b}.bn"), c);
        }
        conv(&mut out, format!("dec{k}.msrcm.out.conv"), c, c, 1, 1);
        bn(&mut out, format!("dec{k}.msrcm.out.bn"), c);
    }
    let g1 = e[0] / 8;
    conv(&mut out, "head.shared".into(), g1, g1, 3, 3);
    bn(&mut out, "head.bn".into(), e[0]);
    conv(&mut out, "head.out".into(), 8, e[0], 1, 1);
    out
}

/// Largest absolute elementwise difference; infinite if dims differ.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .fold(0.0, f64::max)
}
