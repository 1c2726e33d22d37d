use dcffs_core::tensor::{concat_channels, elementwise_binary, BinaryOp};
use dcffs_core::{Shape, Tensor};
use proptest::prelude::*;

fn tensor(max_c: usize) -> impl Strategy<Value = Tensor> {
    (1..=2usize, 1..=max_c, 1..=5usize, 1..=5usize).prop_flat_map(|(n, c, h, w)| {
        prop::collection::vec(-10.0f32..10.0, n * c * h * w)
            .prop_map(move |v| Tensor::new(Shape::new(n, c, h, w), v).unwrap())
    })
}

proptest! {
    #[test]
    fn split_then_concat_is_identity(t in tensor(3), groups in 1..=4usize) {
        let s = t.shape();
        let t = Tensor::from_fn(s.with_channels(s.c * groups * 2), |n, c, h, w| t.at(n, c % s.c, h, w) + c as f32);
        for g in [1, 2, groups, 2 * groups] {
            let parts = t.split_channels(g).unwrap();
            prop_assert_eq!(parts.len(), g);
            prop_assert!(concat_channels(&parts).unwrap().bit_eq(&t));
        }
    }

    #[test]
    fn broadcast_identities(t in tensor(4)) {
        let s = t.shape();
        let ones = Tensor::ones(Shape::new(1, s.c, 1, 1));
        let zeros = Tensor::zeros(Shape::new(1, 1, s.h, 1));
        prop_assert!(elementwise_binary(&t, &ones, BinaryOp::Mul).unwrap().bit_eq(&t));
        prop_assert!(elementwise_binary(&t, &zeros, BinaryOp::Add).unwrap().bit_eq(&t));
    }

    #[test]
    fn add_commutes_on_equal_dims(a in tensor(3)) {
        let b = a.map(|v| v * 0.5 - 1.0);
        prop_assert!(a.add(&b).unwrap().bit_eq(&b.add(&a).unwrap()));
    }
}
