//! The oracle checked against hand-derived facts, not against dcffs-core.

#![allow(clippy::needless_range_loop)]

use std::collections::HashSet;

use dcffs_core::connectivity::{BinaryMask, BoundaryConvention, ShiftFill};
use dcffs_core::network::NetworkConfig;
use dcffs_core::nn::UpsampleMode;
use dcffs_oracle::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_arr(r: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Arr {
    let mut a = Arr::zeros(n, c, h, w);
    a.v.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
    a
}

#[test]
fn identity_kernel_reproduces_input() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let x = random_arr(&mut r, 2, 3, 5, 4);
    let mut k = Arr::zeros(3, 3, 3, 3);
    for c in 0..3 {
        k.set(c, c, 1, 1, 1.0);
    }
    let y = naive_conv(&x, &k, Some(&[0.0; 3]), 1, (1, 1)).unwrap();
    assert_eq!(y.v, x.v);
    assert!(naive_conv(&x, &Arr::zeros(1, 2, 1, 1), None, 1, (0, 0)).is_err());
}

#[test]
fn box_kernel_counts_in_bounds_neighbours() {
    let x = Arr {
        n: 1,
        c: 1,
        h: 3,
        w: 3,
        v: vec![1.0; 9],
    };
    let k = Arr {
        n: 1,
        c: 1,
        h: 3,
        w: 3,
        v: vec![1.0; 9],
    };
    let y = naive_conv(&x, &k, None, 1, (1, 1)).unwrap();
    assert_eq!(y.v, vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
}

#[test]
fn shift_and_back_keeps_the_interior() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let x = random_arr(&mut r, 1, 2, 6, 7);
    for dir in 0..8 {
        let there = naive_shift(&x, dir, ShiftFill::Zero);
        let back = naive_shift(&there, 7 - dir, ShiftFill::Zero);
        let (dy, dx) = DIRECTIONS[dir];
        for c in 0..2 {
            for y in 0..6 {
                for xx in 0..7 {
                    let (ny, nx) = (y as isize - dy, xx as isize - dx);
                    let inside = (0..6).contains(&ny) && (0..7).contains(&nx);
                    let want = if inside { x.get(0, c, y, xx) } else { 0.0 };
                    assert_eq!(back.get(0, c, y, xx), want);
                }
            }
        }
    }
}

#[test]
fn nearest_upsample_then_pool_is_identity() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let x = random_arr(&mut r, 1, 3, 4, 5);
    let up = naive_upsample(&x, 2, UpsampleMode::Nearest);
    assert_eq!((up.h, up.w), (8, 10));
    assert_eq!(naive_max_pool2(&up).v, x.v);
    let bi = naive_upsample(&x, 2, UpsampleMode::Bilinear);
    let lo = x.v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(bi.v.iter().all(|v| (lo..=hi).contains(v)));
}

#[test]
fn vote_on_a_constant_map_squares_it() {
    let x = Arr {
        n: 1,
        c: 8,
        h: 4,
        w: 4,
        v: vec![0.6; 128],
    };
    let xb = naive_bilateral_vote(&x, true);
    assert!(xb.v.iter().all(|&v| (v - 0.36).abs() < 1e-12));
    let neutral = naive_bilateral_vote(&x, false);
    // corner pixel, direction 0 (top-left) leaves the image
    assert_eq!(neutral.get(0, 0, 0, 0), 0.6);
    assert!((neutral.get(0, 0, 2, 2) - 0.36).abs() < 1e-12);
}

#[test]
fn isolated_pixel_breaks_the_round_trip() {
    let dot = BinaryMask::from_fn(5, 5, |y, x| y == 2 && x == 2);
    assert!(!roundtrip_condition(&dot, BoundaryConvention::SameAsSelf));
    let mut report = RoundTripReport::default();
    check_roundtrip(&dot, BoundaryConvention::SameAsSelf, &mut report);
    assert_eq!(report.known_failures.len(), 1);
    assert!(report.violations.is_empty());
    let corner = BinaryMask::from_fn(5, 5, |y, x| y == 0 && x == 0);
    assert!(roundtrip_condition(&corner, BoundaryConvention::SameAsSelf));
    assert!(!roundtrip_condition(&corner, BoundaryConvention::ClassicZero));
}

#[test]
fn parameter_specs_are_unique_and_positive() {
    let specs = expected_param_specs(&NetworkConfig::default());
    let names: HashSet<_> = specs.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names.len(), specs.len());
    assert!(specs.iter().all(|(_, d)| d.iter().all(|&v| v > 0)));
    assert!(names.contains("head.shared.weight"));
}
