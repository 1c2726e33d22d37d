mod common;

use common::{random_tensor, rng};
use dcffs_core::connectivity::{encode_connectivity, BinaryMask, BoundaryConvention, ConnectivityMask};
use dcffs_core::losses::{bce, composite_loss, total_loss, LossWeights, BCE_EPSILON};
use dcffs_core::metrics::dice_iou;
use dcffs_core::network::NetworkOutput;
use dcffs_core::{Shape, Tensor};
use dcffs_oracle::{naive_bilateral_vote, naive_encode, naive_rca, Arr};
use proptest::prelude::*;
use rand::Rng;

/// Independent recomputation of the loss terms from the naive primitives.
fn oracle_terms(xc: &Tensor, y: &BinaryMask, conv: BoundaryConvention) -> (f64, f64, f64) {
    let mean_bce = |p: &Arr, t: &Arr| {
        let mut s = 0.0;
        for (&p, &t) in p.v.iter().zip(&t.v) {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            s -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        }
        s / p.v.len() as f64
    };
    let x = Arr::from_tensor(xc);
    let xb = naive_bilateral_vote(&x, true);
    let agg = naive_rca(&xb);
    let yc = naive_encode(y, conv);
    let yt = Arr::from_tensor(&y.to_tensor());
    (mean_bce(&agg, &yt), mean_bce(&xb, &yc), mean_bce(&x, &yc))
}

fn mask_pair(h: usize, w: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (
        prop::collection::vec(any::<bool>(), h * w),
        prop::collection::vec(any::<bool>(), h * w),
    )
        .prop_map(move |(a, b)| {
            (
                BinaryMask::from_fn(h, w, |y, x| a[y * w + x]),
                BinaryMask::from_fn(h, w, |y, x| b[y * w + x]),
            )
        })
}

#[test]
fn loss_terms_match_independent_recomputation() {
    let mut r = rng(31);
    let w = LossWeights::default();
    for _ in 0..30 {
        let (h, wd) = (r.random_range(2..=9), r.random_range(2..=9));
        let y = BinaryMask::from_fn(h, wd, |_, _| r.random_bool(0.5));
        let a = random_tensor(&mut r, Shape::new(1, 8, h, wd), 0.0, 1.0);
        let b = random_tensor(&mut r, Shape::new(1, 8, h, wd), 0.0, 1.0);
        let out = NetworkOutput {
            output1: a.clone(),
            output2: b.clone(),
        };
        let report = total_loss(&out, &y, &w, BoundaryConvention::SameAsSelf).unwrap();
        let combine = |(m, bb, cb): (f64, f64, f64)| m + 0.2 * bb + 0.8 * cb;
        let t1 = oracle_terms(&a, &y, BoundaryConvention::SameAsSelf);
        let t2 = oracle_terms(&b, &y, BoundaryConvention::SameAsSelf);
        assert!((report.output1.l_main_bce - t1.0).abs() < 1e-6);
        assert!((report.output1.l_bbce - t1.1).abs() < 1e-6);
        assert!((report.output1.l_cbce - t1.2).abs() < 1e-6);
        assert!((report.total - (0.2 * combine(t1) + combine(t2))).abs() < 1e-6);
    }
}

#[test]
fn uniform_half_map_against_oracle() {
    let y = BinaryMask::from_fn(5, 6, |yy, x| yy > 0 && x > 1);
    let xc = Tensor::full(Shape::new(1, 8, 5, 6), 0.5);
    let l = composite_loss(
        &ConnectivityMask::new(xc.clone()).unwrap(),
        &y,
        &LossWeights::default(),
        BoundaryConvention::SameAsSelf,
    )
    .unwrap();
    let (m, b, c) = oracle_terms(&xc, &y, BoundaryConvention::SameAsSelf);
    assert!((l.l_cbce - std::f64::consts::LN_2).abs() < 1e-9);
    assert!((l.l_main_bce - m).abs() < 1e-9 && (l.l_bbce - b).abs() < 1e-9 && (l.l_cbce - c).abs() < 1e-9);
}

#[test]
fn perfect_prediction_bound() {
    let y = BinaryMask::from_fn(8, 8, |yy, x| (2..6).contains(&yy) && x < 5);
    let xc = encode_connectivity(&y, BoundaryConvention::SameAsSelf);
    let l = composite_loss(&xc, &y, &LossWeights::default(), BoundaryConvention::SameAsSelf).unwrap();
    assert!(l.l_combined < 1e-6 * 2.0);
    assert!(
        bce(
            &Tensor::ones(Shape::new(1, 1, 2, 2)),
            &Tensor::zeros(Shape::new(1, 1, 2, 2))
        )
        .unwrap()
            > -BCE_EPSILON.ln() - 1e-3
    );
}

proptest! {
    #[test]
    fn dice_iou_identity((a, b) in mask_pair(5, 7)) {
        let m = dice_iou(&a, &b).unwrap();
        prop_assert!((m.dice - 2.0 * m.iou / (1.0 + m.iou)).abs() < 1e-9);
        prop_assert!(m.iou <= m.dice);
        prop_assert!((0.0..=1.0).contains(&m.dice) && (0.0..=1.0).contains(&m.iou));
    }

    #[test]
    fn bce_is_non_negative(p in prop::collection::vec(0.0f32..=1.0, 12), t in prop::collection::vec(0.0f32..=1.0, 12)) {
        let p = Tensor::new(Shape::new(1, 1, 3, 4), p).unwrap();
        let t = Tensor::new(Shape::new(1, 1, 3, 4), t).unwrap();
        prop_assert!(bce(&p, &t).unwrap() >= 0.0);
    }

    #[test]
    fn combined_loss_is_monotone_in_cbce_weight(seed in 0u64..500, w1 in 0.0f64..2.0, extra in 0.0f64..2.0) {
        let mut r = rng(seed);
        let y = BinaryMask::from_fn(4, 5, |_, _| r.random_bool(0.5));
        let xc = ConnectivityMask::new(random_tensor(&mut r, Shape::new(1, 8, 4, 5), 0.0, 1.0)).unwrap();
        let lo = LossWeights { w_cbce: w1, ..Default::default() };
        let hi = LossWeights { w_cbce: w1 + extra, ..Default::default() };
        let a = composite_loss(&xc, &y, &lo, BoundaryConvention::SameAsSelf).unwrap();
        let b = composite_loss(&xc, &y, &hi, BoundaryConvention::SameAsSelf).unwrap();
        prop_assert!(b.l_combined >= a.l_combined);
    }

    #[test]
    fn deep_supervision_weight_is_linear(seed in 0u64..500, a in 0.0f64..3.0) {
        let mut r = rng(seed);
        let y = BinaryMask::from_fn(4, 4, |_, _| r.random_bool(0.5));
        let out = NetworkOutput {
            output1: random_tensor(&mut r, Shape::new(1, 8, 4, 4), 0.0, 1.0),
            output2: random_tensor(&mut r, Shape::new(1, 8, 4, 4), 0.0, 1.0),
        };
        let with = |w_output1| total_loss(&out, &y, &LossWeights { w_output1, ..Default::default() }, BoundaryConvention::SameAsSelf).unwrap();
        let (ra, r0) = (with(a), with(0.0));
        prop_assert!((ra.total - r0.total - a * ra.output1.l_combined).abs() < 1e-6);
        prop_assert_eq!(r0.total, r0.output2.l_combined);
    }
}
