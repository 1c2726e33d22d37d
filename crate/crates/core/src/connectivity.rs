//! 8-neighbourhood connectivity masks.
//!
//! A connectivity mask has one channel per neighbour direction. Channel `i`
//! at pixel `p` says whether `p` and `p + offset(i)` are both foreground.
//! Bilateral voting multiplies each entry by its partner (the opposite channel
//! at the neighbouring pixel), and region-guided channel aggregation collapses
//! the eight voted channels back to one probability map.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Row-major scan of the 3x3 neighbourhood minus the centre, so that
/// direction `9 - i` is the geometric opposite of direction `i`.
const OFFSETS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// One of the eight neighbour directions, numbered 1 through 8.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Direction(u8);

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction(1),
        Direction(2),
        Direction(3),
        Direction(4),
        Direction(5),
        Direction(6),
        Direction(7),
        Direction(8),
    ];

    pub fn new(index: u8) -> Option<Self> {
        (1..=8).contains(&index).then_some(Direction(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// Zero-based channel index.
    pub fn channel(self) -> usize {
        self.0 as usize - 1
    }

    /// `(dy, dx)`.
    pub fn offset(self) -> (isize, isize) {
        OFFSETS[self.channel()]
    }

    pub fn opposite(self) -> Direction {
        Direction(9 - self.0)
    }

    /// The neighbour of `(y, x)` in this direction, if it lies inside `h x w`.
    #[inline]
    pub fn neighbor(self, y: usize, x: usize, h: usize, w: usize) -> Option<(usize, usize)> {
        let (dy, dx) = self.offset();
        let ny = y as isize + dy;
        let nx = x as isize + dx;
        (ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w).then_some((ny as usize, nx as usize))
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a direction pointing outside the image is encoded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryConvention {
    /// Missing neighbours are background.
    ClassicZero,
    /// Missing neighbours take the pixel's own label.
    #[default]
    SameAsSelf,
}

/// Partner value used by bilateral voting when the neighbour is outside the image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderPartner {
    /// The missing neighbour mirrors the pixel, so the entry votes with itself.
    #[default]
    SelfPair,
    /// The entry is multiplied by 1 and passes through unchanged.
    Neutral,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftFill {
    #[default]
    Zero,
    Replicate,
}

/// A strictly binary 2-D mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::invalid(
                "binary_mask",
                format!("{} values for a {h}x{w} mask", data.len()),
            ));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::invalid("binary_mask", "values must be 0 or 1"));
        }
        Ok(BinaryMask { h, w, data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        BinaryMask {
            h,
            w,
            data: vec![0; h * w],
        }
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let data = (0..h * w).map(|i| f(i / w, i % w) as u8).collect();
        BinaryMask { h, w, data }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.w + x] == 1
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// `(1, 1, h, w)` tensor of 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.data.iter().map(|&v| v as f32).collect();
        Tensor::from_parts(Shape::new(1, 1, self.h, self.w), data)
    }

    /// True when every foreground pixel has a foreground 8-neighbour, or, under
    /// `SameAsSelf`, touches the image border. Exactly these masks survive
    /// encode followed by decode.
    pub fn round_trips(&self, conv: BoundaryConvention) -> bool {
        (0..self.h).all(|y| {
            (0..self.w).all(|x| {
                if !self.get(y, x) {
                    return true;
                }
                Direction::ALL.iter().any(|d| match d.neighbor(y, x, self.h, self.w) {
                    Some((ny, nx)) => self.get(ny, nx),
                    None => conv == BoundaryConvention::SameAsSelf,
                })
            })
        })
    }
}

/// An `(n, 8, h, w)` map with values in `[0, 1]`; channel `i` belongs to direction `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityMask(Tensor);

impl ConnectivityMask {
    /// Wraps an 8-channel tensor, clamping values into `[0, 1]`.
    pub fn new(t: Tensor) -> Result<Self> {
        if t.shape().c != 8 {
            return Err(Error::invalid(
                "connectivity_mask",
                format!("expected 8 channels, got {}", t.shape()),
            ));
        }
        Ok(ConnectivityMask(t.map(|v| v.clamp(0.0, 1.0))))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn shape(&self) -> Shape {
        self.0.shape()
    }
}

pub fn encode_connectivity(y: &BinaryMask, conv: BoundaryConvention) -> ConnectivityMask {
    let (h, w) = (y.h, y.w);
    let t = Tensor::from_fn(Shape::new(1, 8, h, w), |_, c, py, px| {
        let d = Direction::ALL[c];
        let own = y.get(py, px);
        let on = match d.neighbor(py, px, h, w) {
            Some((ny, nx)) => own && y.get(ny, nx),
            None => match conv {
                BoundaryConvention::ClassicZero => false,
                BoundaryConvention::SameAsSelf => own,
            },
        };
        on as u8 as f32
    });
    ConnectivityMask(t)
}

/// `out(p) = x(p + offset(d))`; sources outside the image read 0 or the
/// nearest valid pixel.
pub fn shift(x: &Tensor, d: Direction, fill: ShiftFill) -> Tensor {
    let s = x.shape();
    let (dy, dx) = d.offset();
    let clamp = |v: isize, len: usize| v.clamp(0, len as isize - 1) as usize;
    let mut out = Tensor::zeros(s);
    if s.plane() == 0 {
        return out;
    }
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..s.h {
                let sy = y as isize + dy;
                let row_valid = sy >= 0 && (sy as usize) < s.h;
                if !row_valid && fill == ShiftFill::Zero {
                    continue;
                }
                let sy = clamp(sy, s.h);
                for x in 0..s.w {
                    let sx = x as isize + dx;
                    let col_valid = sx >= 0 && (sx as usize) < s.w;
                    if !col_valid && fill == ShiftFill::Zero {
                        continue;
                    }
                    dst[y * s.w + x] = src[sy * s.w + clamp(sx, s.w)];
                }
            }
        }
    }
    out
}

pub fn bilateral_vote(xc: &ConnectivityMask) -> ConnectivityMask {
    bilateral_vote_with(xc, BorderPartner::default())
}

/// `X^B_i(p) = X^C_i(p) * X^C_{9-i}(p + offset(i))`, with `border` deciding the
/// partner when the neighbour is outside the image.
pub fn bilateral_vote_with(xc: &ConnectivityMask, border: BorderPartner) -> ConnectivityMask {
    let t = xc.tensor();
    let s = t.shape();
    let out = Tensor::from_fn(s, |n, c, y, x| {
        let d = Direction::ALL[c];
        let own = t.at(n, c, y, x);
        let partner = match d.neighbor(y, x, s.h, s.w) {
            Some((ny, nx)) => t.at(n, d.opposite().channel(), ny, nx),
            None => match border {
                BorderPartner::SelfPair => own,
                BorderPartner::Neutral => 1.0,
            },
        };
        own * partner
    });
    ConnectivityMask(out)
}

/// Collapses the eight channels of a voted map at one pixel.
pub trait ChannelAggregate {
    fn aggregate(&self, values: [f32; 8]) -> f32;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MaxAggregate;

impl ChannelAggregate for MaxAggregate {
    fn aggregate(&self, values: [f32; 8]) -> f32 {
        values.into_iter().fold(f32::NEG_INFINITY, f32::max)
    }
}

pub fn rca_aggregate(xb: &ConnectivityMask) -> Tensor {
    rca_aggregate_with(xb, &MaxAggregate)
}

pub fn rca_aggregate_with(xb: &ConnectivityMask, f: &impl ChannelAggregate) -> Tensor {
    let t = xb.tensor();
    let s = t.shape();
    Tensor::from_fn(s.with_channels(1), |n, _, y, x| {
        f.aggregate(std::array::from_fn(|c| t.at(n, c, y, x)))
    })
}

fn check_threshold(threshold: f32) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "decode_mask",
            format!("threshold {threshold} outside (0, 1)"),
        ))
    }
}

/// Bilateral vote, aggregate, and binarise each batch item at `>= threshold`.
pub fn decode_masks(xc: &ConnectivityMask, threshold: f32, border: BorderPartner) -> Result<Vec<BinaryMask>> {
    check_threshold(threshold)?;
    let prob = rca_aggregate(&bilateral_vote_with(xc, border));
    let s = prob.shape();
    Ok((0..s.n)
        .map(|n| {
            let plane = prob.plane(n, 0);
            BinaryMask::from_fn(s.h, s.w, |y, x| plane[y * s.w + x] >= threshold)
        })
        .collect())
}

/// Decodes a single-item connectivity map with the default border partner.
pub fn decode_mask(xc: &ConnectivityMask, threshold: f32) -> Result<BinaryMask> {
    if xc.shape().n != 1 {
        return Err(Error::invalid(
            "decode_mask",
            format!("expected batch size 1, got {}", xc.shape()),
        ));
    }
    let mut masks = decode_masks(xc, threshold, BorderPartner::default())?;
    Ok(masks.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::from_fn(h, w, |y, x| rows[y].as_bytes()[x] == b'1')
    }

    #[test]
    fn direction_table_and_pairing() {
        for d in Direction::ALL {
            let (dy, dx) = d.offset();
            assert_eq!(d.opposite().offset(), (-dy, -dx));
            assert_eq!(d.opposite().opposite(), d);
        }
        assert_eq!(Direction::new(5).unwrap().offset(), (0, 1));
        assert!(Direction::new(0).is_none() && Direction::new(9).is_none());
    }

    #[test]
    fn single_pixel_encodings() {
        let one = mask(&["1"]);
        let same = encode_connectivity(&one, BoundaryConvention::SameAsSelf);
        assert!(same.tensor().data().iter().all(|&v| v == 1.0));
        let classic = encode_connectivity(&one, BoundaryConvention::ClassicZero);
        assert!(classic.tensor().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn classic_corner_of_full_2x2() {
        let y = mask(&["11", "11"]);
        let xc = encode_connectivity(&y, BoundaryConvention::ClassicZero);
        let on: Vec<u8> = Direction::ALL
            .iter()
            .filter(|d| xc.tensor().at(0, d.channel(), 0, 0) == 1.0)
            .map(|d| d.index())
            .collect();
        assert_eq!(on, vec![5, 7, 8]);
    }

    #[test]
    fn shift_row_zero_fill() {
        let x = Tensor::new(Shape::new(1, 1, 1, 2), vec![3.0, 4.0]).unwrap();
        let right = Direction::new(5).unwrap();
        assert_eq!(shift(&x, right, ShiftFill::Zero).data(), &[4.0, 0.0]);
        assert_eq!(shift(&x, right, ShiftFill::Replicate).data(), &[4.0, 4.0]);
    }

    #[test]
    fn shift_constant_replicate() {
        let x = Tensor::full(Shape::new(1, 2, 3, 4), 0.25);
        for d in Direction::ALL {
            assert!(shift(&x, d, ShiftFill::Replicate).bit_eq(&x));
        }
    }

    #[test]
    fn shift_then_opposite_on_interior() {
        let x = Tensor::from_fn(Shape::new(1, 1, 5, 6), |_, _, h, w| (h * 6 + w) as f32 + 1.0);
        for d in Direction::ALL {
            let back = shift(&shift(&x, d, ShiftFill::Zero), d.opposite(), ShiftFill::Zero);
            for y in 1..4 {
                for xx in 1..5 {
                    assert_eq!(back.at(0, 0, y, xx), x.at(0, 0, y, xx));
                }
            }
        }
    }

    #[test]
    fn vote_fixed_points() {
        let full = encode_connectivity(&mask(&["111", "111", "111"]), BoundaryConvention::SameAsSelf);
        assert!(bilateral_vote(&full).tensor().bit_eq(full.tensor()));
        let zeros = ConnectivityMask::new(Tensor::zeros(Shape::new(1, 8, 3, 3))).unwrap();
        assert!(bilateral_vote(&zeros).tensor().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vote_writes_product_to_both_partners() {
        let right = Direction::new(5).unwrap();
        let mut data = vec![1.0; 8 * 2];
        let s = Shape::new(1, 8, 1, 2);
        data[s.offset(0, right.channel(), 0, 0)] = 0.6;
        data[s.offset(0, right.opposite().channel(), 0, 1)] = 0.5;
        let xb = bilateral_vote(&ConnectivityMask::new(Tensor::new(s, data).unwrap()).unwrap());
        assert_eq!(xb.tensor().at(0, right.channel(), 0, 0), 0.3);
        assert_eq!(xb.tensor().at(0, right.opposite().channel(), 0, 1), 0.3);
    }

    #[test]
    fn rca_is_channel_max() {
        let s = Shape::new(1, 8, 1, 1);
        let half = ConnectivityMask::new(Tensor::full(s, 0.5)).unwrap();
        assert_eq!(rca_aggregate(&half).data(), &[0.5]);
        let ramp = Tensor::new(s, (1..=8).map(|i| i as f32 / 10.0).collect()).unwrap();
        assert_eq!(rca_aggregate(&ConnectivityMask::new(ramp).unwrap()).data(), &[0.8]);
    }

    #[test]
    fn decode_round_trip_and_errors() {
        let y = mask(&["1100", "1100", "0000", "0011"]);
        let xc = encode_connectivity(&y, BoundaryConvention::SameAsSelf);
        assert_eq!(decode_mask(&xc, 0.5).unwrap(), y);

        let zero = ConnectivityMask::new(Tensor::zeros(Shape::new(1, 8, 3, 3))).unwrap();
        assert_eq!(decode_mask(&zero, 0.5).unwrap().count(), 0);
        assert!(decode_mask(&zero, 1.5).is_err());
        assert!(decode_mask(&zero, 0.0).is_err());
    }

    #[test]
    fn isolated_interior_pixel_is_lost() {
        let y = mask(&["000", "010", "000"]);
        assert!(!y.round_trips(BoundaryConvention::SameAsSelf));
        let xc = encode_connectivity(&y, BoundaryConvention::SameAsSelf);
        assert_eq!(decode_mask(&xc, 0.5).unwrap().count(), 0);
    }

    #[test]
    fn uniform_map_decoding_depends_on_border_partner() {
        let xc = ConnectivityMask::new(Tensor::full(Shape::new(1, 8, 3, 3), 0.6)).unwrap();
        // self-paired border entries square like interior ones: 0.36 everywhere
        let self_pair = decode_masks(&xc, 0.5, BorderPartner::SelfPair).unwrap();
        assert_eq!(self_pair[0].count(), 0);
        let voted = bilateral_vote_with(&xc, BorderPartner::SelfPair);
        assert!(voted.tensor().data().iter().all(|&v| (v - 0.36).abs() < 1e-7));

        // neutral border partners keep 0.6 on the rim, only the centre drops
        let neutral = decode_masks(&xc, 0.5, BorderPartner::Neutral).unwrap();
        assert_eq!(neutral[0], mask(&["111", "101", "111"]));
    }

    #[test]
    fn connectivity_mask_clamps() {
        let t = Tensor::new(Shape::new(1, 8, 1, 1), vec![-1.0, 2.0, 0.5, 0.0, 1.0, 0.1, 0.2, 3.0]).unwrap();
        let m = ConnectivityMask::new(t).unwrap();
        assert_eq!(m.tensor().data(), &[0.0, 1.0, 0.5, 0.0, 1.0, 0.1, 0.2, 1.0]);
        assert!(ConnectivityMask::new(Tensor::zeros(Shape::new(1, 7, 1, 1))).is_err());
    }
}
