//! Dense NCHW `f32` tensors.
//!
//! The layout is fixed row-major: element `(n, c, h, w)` lives at
//! `((n * C + c) * H + h) * W + w`. Tensors are never mutated through the
//! public API once built; every operation returns a fresh tensor.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Number of elements in one `(h, w)` plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn with_channels(self, c: usize) -> Self {
        Shape { c, ..self }
    }

    pub const fn with_spatial(self, h: usize, w: usize) -> Self {
        Shape { h, w, ..self }
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    #[inline]
    pub const fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Mul,
}

impl BinaryOp {
    #[inline]
    fn apply(self, a: f32, b: f32) -> f32 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Mul => a * b,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::invalid(
                "tensor",
                format!(
                    "data length {} does not match dims {shape} ({} elements)",
                    data.len(),
                    shape.numel()
                ),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub(crate) fn from_parts(shape: Shape, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), shape.numel());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.shape.offset(n, c, h, w)]
    }

    /// The `(h, w)` plane of channel `c` in batch item `n`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let len = self.shape.plane();
        let start = (n * self.shape.c + c) * len;
        &self.data[start..start + len]
    }

    pub(crate) fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let len = self.shape.plane();
        let start = (n * self.shape.c + c) * len;
        &mut self.data[start..start + len]
    }

    /// Equal dims and bit-identical data (distinguishes `-0.0` and NaN payloads).
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Same data under new dims with the same element count.
    pub fn reshape(&self, shape: Shape) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f32) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn add(&self, b: &Tensor) -> Result<Tensor> {
        elementwise_binary(self, b, BinaryOp::Add)
    }

    pub fn mul(&self, b: &Tensor) -> Result<Tensor> {
        elementwise_binary(self, b, BinaryOp::Mul)
    }

    pub fn split_channels(&self, groups: usize) -> Result<Vec<Tensor>> {
        split_channels(self, groups)
    }
}

fn broadcastable(a: Shape, b: Shape) -> bool {
    a.dims()
        .iter()
        .zip(b.dims().iter())
        .all(|(&da, &db)| db == da || db == 1)
}

/// `a op b`, where every axis of `b` either matches `a` or has size 1.
pub fn elementwise_binary(a: &Tensor, b: &Tensor, op: BinaryOp) -> Result<Tensor> {
    let (sa, sb) = (a.shape, b.shape);
    if sa == sb {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| op.apply(x, y)).collect();
        return Ok(Tensor::from_parts(sa, data));
    }
    if !broadcastable(sa, sb) {
        return Err(Error::ShapeMismatch {
            op: "elementwise_binary",
            left: sa,
            right: sb,
        });
    }

    let pick = |i: usize, d: usize| if d == 1 { 0 } else { i };
    let mut data = Vec::with_capacity(sa.numel());
    for n in 0..sa.n {
        for c in 0..sa.c {
            for h in 0..sa.h {
                let bh = sb.offset(pick(n, sb.n), pick(c, sb.c), pick(h, sb.h), 0);
                let arow = &a.data[sa.offset(n, c, h, 0)..][..sa.w];
                if sb.w == 1 {
                    let v = b.data[bh];
                    data.extend(arow.iter().map(|&x| op.apply(x, v)));
                } else {
                    let brow = &b.data[bh..bh + sb.w];
                    data.extend(arow.iter().zip(brow).map(|(&x, &y)| op.apply(x, y)));
                }
            }
        }
    }
    Ok(Tensor::from_parts(sa, data))
}

/// Stacks `parts` along the channel axis, in order.
pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
    let first = match parts.first() {
        Some(t) => t.shape,
        None => return Err(Error::invalid("concat_channels", "no parts given")),
    };
    for p in &parts[1..] {
        let s = p.shape;
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                left: first,
                right: s,
            });
        }
    }
    let channels = parts.iter().map(|p| p.shape.c).sum();
    let shape = first.with_channels(channels);
    let mut data = Vec::with_capacity(shape.numel());
    for n in 0..shape.n {
        for p in parts {
            let block = p.shape.c * p.shape.plane();
            data.extend_from_slice(&p.data[n * block..(n + 1) * block]);
        }
    }
    Ok(Tensor::from_parts(shape, data))
}

/// Splits the channel axis into `groups` contiguous blocks of equal width.
pub fn split_channels(x: &Tensor, groups: usize) -> Result<Vec<Tensor>> {
    let s = x.shape;
    if groups == 0 || !s.c.is_multiple_of(groups) {
        return Err(Error::IndivisibleChannels {
            op: "split_channels",
            channels: s.c,
            groups,
        });
    }
    let width = s.c / groups;
    let shape = s.with_channels(width);
    let block = width * s.plane();
    Ok((0..groups)
        .map(|g| {
            let mut data = Vec::with_capacity(shape.numel());
            for n in 0..s.n {
                let start = (n * s.c + g * width) * s.plane();
                data.extend_from_slice(&x.data[start..start + block]);
            }
            Tensor::from_parts(shape, data)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: Shape) -> Tensor {
        let data = (0..shape.numel()).map(|i| i as f32 * 0.5 - 3.0).collect();
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn add_zero_and_mul_one_are_identities() {
        let x = seq(Shape::new(2, 3, 4, 5));
        assert!(x.add(&Tensor::zeros(x.shape())).unwrap().bit_eq(&x));
        assert!(x.mul(&Tensor::ones(Shape::new(1, 1, 1, 1))).unwrap().bit_eq(&x));
    }

    #[test]
    fn add_small_vectors() {
        let s = Shape::new(1, 1, 1, 2);
        let a = Tensor::new(s, vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(s, vec![3.0, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn broadcast_mismatch_names_both_shapes() {
        let a = Tensor::zeros(Shape::new(1, 4, 2, 2));
        let b = Tensor::zeros(Shape::new(1, 3, 1, 1));
        let msg = a.mul(&b).unwrap_err().to_string();
        assert!(msg.contains("(1, 4, 2, 2)") && msg.contains("(1, 3, 1, 1)"), "{msg}");
    }

    #[test]
    fn channel_broadcast_scales_each_channel() {
        let a = Tensor::ones(Shape::new(1, 2, 2, 2));
        let b = Tensor::new(Shape::new(1, 2, 1, 1), vec![2.0, 3.0]).unwrap();
        assert_eq!(a.mul(&b).unwrap().data(), &[2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn concat_shapes_and_single_part() {
        let a = seq(Shape::new(1, 3, 2, 2));
        let b = seq(Shape::new(1, 5, 2, 2));
        let c = concat_channels(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.shape(), Shape::new(1, 8, 2, 2));
        assert_eq!(&c.data()[..12], a.data());
        assert!(concat_channels(std::slice::from_ref(&a)).unwrap().bit_eq(&a));
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::zeros(Shape::new(1, 1, 2, 2));
        let b = Tensor::zeros(Shape::new(1, 1, 3, 2));
        assert!(matches!(concat_channels(&[a, b]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn split_shapes() {
        let x = seq(Shape::new(1, 8, 4, 4));
        let parts = x.split_channels(8).unwrap();
        assert_eq!(parts.len(), 8);
        assert!(parts.iter().all(|p| p.shape() == Shape::new(1, 1, 4, 4)));
        let parts = seq(Shape::new(1, 16, 4, 4)).split_channels(8).unwrap();
        assert!(parts.iter().all(|p| p.shape() == Shape::new(1, 2, 4, 4)));
    }

    #[test]
    fn split_reports_indivisible_channels() {
        let err = seq(Shape::new(1, 12, 2, 2)).split_channels(8).unwrap_err();
        assert!(matches!(
            err,
            Error::IndivisibleChannels {
                channels: 12,
                groups: 8,
                ..
            }
        ));
    }

    #[test]
    fn split_concat_round_trip_with_batch() {
        let x = seq(Shape::new(3, 16, 3, 2));
        for g in [1, 2, 4, 8, 16] {
            let back = concat_channels(&x.split_channels(g).unwrap()).unwrap();
            assert!(back.bit_eq(&x));
        }
    }

    #[test]
    fn broadcast_exhaustive_small_shapes() {
        // every (a, b) pair with dims <= 3 either broadcasts correctly or errors
        let dims = |i: usize| {
            let d = [i % 4, (i / 4) % 4, (i / 16) % 4, (i / 64) % 4];
            Shape::new(d[0], d[1], d[2], d[3])
        };
        for ia in 0..256 {
            let sa = dims(ia);
            let a = seq(sa);
            for ib in 0..256 {
                let sb = dims(ib);
                let b = seq(sb);
                match a.add(&b) {
                    Ok(out) => {
                        assert!(broadcastable(sa, sb));
                        for (n, c, h, w) in iter4(sa) {
                            let bi = sb.offset(
                                if sb.n == 1 { 0 } else { n },
                                if sb.c == 1 { 0 } else { c },
                                if sb.h == 1 { 0 } else { h },
                                if sb.w == 1 { 0 } else { w },
                            );
                            assert_eq!(out.at(n, c, h, w), a.at(n, c, h, w) + b.data()[bi]);
                        }
                    }
                    Err(_) => assert!(!broadcastable(sa, sb)),
                }
            }
        }
    }

    fn iter4(s: Shape) -> impl Iterator<Item = (usize, usize, usize, usize)> {
        (0..s.n).flat_map(move |n| {
            (0..s.c).flat_map(move |c| (0..s.h).flat_map(move |h| (0..s.w).map(move |w| (n, c, h, w))))
        })
    }
}
