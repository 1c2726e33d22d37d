//! Overlap metrics between binary masks.

use crate::connectivity::BinaryMask;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub dice: f64,
    pub iou: f64,
}

/// Dice and IoU of the foreground; two empty masks score 1 on both.
pub fn dice_iou(pred: &BinaryMask, truth: &BinaryMask) -> Result<MetricsReport> {
    if (pred.height(), pred.width()) != (truth.height(), truth.width()) {
        return Err(Error::ShapeMismatch {
            op: "dice_iou",
            left: pred.to_tensor().shape(),
            right: truth.to_tensor().shape(),
        });
    }
    let inter = pred
        .data()
        .iter()
        .zip(truth.data())
        .filter(|(&a, &b)| a == 1 && b == 1)
        .count() as f64;
    let total = (pred.count() + truth.count()) as f64;
    if total == 0.0 {
        return Ok(MetricsReport { dice: 1.0, iou: 1.0 });
    }
    Ok(MetricsReport {
        dice: 2.0 * inter / total,
        iou: inter / (total - inter),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> BinaryMask {
        BinaryMask::new(2, 4, bits.to_vec()).unwrap()
    }

    #[test]
    fn canonical_cases() {
        let a = mask(&[1, 1, 1, 1, 0, 0, 0, 0]);
        assert_eq!(dice_iou(&a, &a).unwrap(), MetricsReport { dice: 1.0, iou: 1.0 });
        let b = mask(&[0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(dice_iou(&a, &b).unwrap(), MetricsReport { dice: 0.0, iou: 0.0 });
        let half = mask(&[0, 0, 1, 1, 1, 1, 0, 0]);
        let m = dice_iou(&a, &half).unwrap();
        assert_eq!(m.dice, 0.5);
        assert_eq!(m.iou, 1.0 / 3.0);
    }

    #[test]
    fn empty_masks_score_one() {
        let z = BinaryMask::zeros(3, 3);
        assert_eq!(dice_iou(&z, &z).unwrap(), MetricsReport { dice: 1.0, iou: 1.0 });
        let one = BinaryMask::from_fn(3, 3, |y, x| y == 1 && x == 1);
        assert_eq!(dice_iou(&z, &one).unwrap().dice, 0.0);
    }

    #[test]
    fn dims_must_agree() {
        assert!(dice_iou(&BinaryMask::zeros(2, 3), &BinaryMask::zeros(3, 2)).is_err());
    }
}
