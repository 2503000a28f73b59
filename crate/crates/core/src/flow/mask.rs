//! Binary coupling masks: checkerboard, dimension-wise, and learned.
//!
//! A mask value of 1 marks a pass-through dimension, 0 a transformed one.
//! Learned masks binarize trainable logits with a hard threshold in the
//! forward direction and a straight-through path on `sigmoid(logits)` in
//! the backward direction.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// Masking strategy for a coupling layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskStrategy {
    /// Alternating pattern offset by the layer index.
    Checkerboard,
    /// First half vs second half, complemented on odd layers.
    Dimwise,
    /// Trainable logits, thresholded at zero.
    Learned,
}

impl MaskStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            MaskStrategy::Checkerboard => "checkerboard",
            MaskStrategy::Dimwise => "dimwise",
            MaskStrategy::Learned => "learned",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "checkerboard" => Ok(MaskStrategy::Checkerboard),
            "dimwise" => Ok(MaskStrategy::Dimwise),
            "learned" => Ok(MaskStrategy::Learned),
            other => Err(Error::validation(format!(
                "unknown mask strategy '{other}' (expected checkerboard, dimwise or learned)"
            ))),
        }
    }
}

/// Per-layer mask description. `logits` is present only for the learned
/// strategy and has length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub strategy: MaskStrategy,
    pub layer_index: usize,
    pub dim: usize,
    pub logits: Option<Array1<f64>>,
}

impl MaskSpec {
    pub fn fixed(strategy: MaskStrategy, layer_index: usize, dim: usize) -> Self {
        debug_assert!(strategy != MaskStrategy::Learned);
        MaskSpec { strategy, layer_index, dim, logits: None }
    }

    /// Learned mask with logits `+1/-1` following the checkerboard pattern
    /// of the same layer, a known-good starting configuration.
    pub fn learned_from_checkerboard(layer_index: usize, dim: usize) -> Self {
        let logits = Array1::from_shape_fn(dim, |i| {
            if (i + layer_index) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        });
        MaskSpec { strategy: MaskStrategy::Learned, layer_index, dim, logits: Some(logits) }
    }
}

/// Result of binarizing learned-mask logits: the hard mask, the sigmoid
/// surrogate carried by the straight-through backward path, and the index
/// flipped by degeneracy repair, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskBinarization {
    pub mask: Array1<f64>,
    pub surrogate: Array1<f64>,
    pub repaired_index: Option<usize>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Thresholds logits at zero (`1` iff logit > 0) and repairs degenerate
/// all-equal masks so both values occur: in a tie between extremal logits
/// the lowest index ends up carrying the 1.
pub fn binarize_learned_mask(logits: &ArrayView1<f64>) -> Result<MaskBinarization> {
    if logits.len() < 2 {
        return Err(Error::validation(format!(
            "learned mask needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    let mut mask = logits.mapv(|l| if l > 0.0 { 1.0 } else { 0.0 });
    let ones = mask.iter().filter(|&&b| b == 1.0).count();
    let mut repaired_index = None;
    if ones == mask.len() {
        // all pass-through: zero out the smallest logit; on ties flip the
        // last one so index 0 keeps its 1
        let mut idx = 0usize;
        for (i, l) in logits.iter().enumerate() {
            if *l <= logits[idx] {
                idx = i;
            }
        }
        mask[idx] = 0.0;
        repaired_index = Some(idx);
    } else if ones == 0 {
        // all transformed: promote the largest logit; first wins ties
        let mut idx = 0usize;
        for (i, l) in logits.iter().enumerate() {
            if *l > logits[idx] {
                idx = i;
            }
        }
        mask[idx] = 1.0;
        repaired_index = Some(idx);
    }
    let surrogate = logits.mapv(sigmoid);
    Ok(MaskBinarization { mask, surrogate, repaired_index })
}

/// Builds the binary mask for a spec. Every returned mask contains both a
/// 0 and a 1.
pub fn build_mask(spec: &MaskSpec) -> Result<Array1<f64>> {
    if spec.dim < 2 {
        return Err(Error::validation(format!("mask dim must be > 1, got {}", spec.dim)));
    }
    match spec.strategy {
        MaskStrategy::Checkerboard => Ok(Array1::from_shape_fn(spec.dim, |i| {
            if (i + spec.layer_index) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        })),
        MaskStrategy::Dimwise => {
            let half = spec.dim.div_ceil(2);
            let even = spec.layer_index % 2 == 0;
            Ok(Array1::from_shape_fn(spec.dim, |i| {
                let first = i < half;
                if first == even {
                    1.0
                } else {
                    0.0
                }
            }))
        }
        MaskStrategy::Learned => {
            let logits = spec
                .logits
                .as_ref()
                .ok_or_else(|| Error::validation("learned mask without logits".to_string()))?;
            if logits.len() != spec.dim {
                return Err(Error::validation(format!(
                    "mask logits have length {}, expected dim {}",
                    logits.len(),
                    spec.dim
                )));
            }
            Ok(binarize_learned_mask(&logits.view())?.mask)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn checkerboard_layer0() {
        let spec = MaskSpec::fixed(MaskStrategy::Checkerboard, 0, 4);
        assert_eq!(build_mask(&spec).unwrap(), array![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn checkerboard_alternates_with_layer() {
        let spec = MaskSpec::fixed(MaskStrategy::Checkerboard, 1, 4);
        assert_eq!(build_mask(&spec).unwrap(), array![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn dimwise_layers() {
        let even = MaskSpec::fixed(MaskStrategy::Dimwise, 0, 4);
        assert_eq!(build_mask(&even).unwrap(), array![1.0, 1.0, 0.0, 0.0]);
        let odd = MaskSpec::fixed(MaskStrategy::Dimwise, 1, 4);
        assert_eq!(build_mask(&odd).unwrap(), array![0.0, 0.0, 1.0, 1.0]);
        // odd dim: first ceil(D/2) entries form the even-layer half
        let five = MaskSpec::fixed(MaskStrategy::Dimwise, 0, 5);
        assert_eq!(build_mask(&five).unwrap(), array![1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn learned_thresholds_at_zero() {
        let spec = MaskSpec {
            strategy: MaskStrategy::Learned,
            layer_index: 0,
            dim: 4,
            logits: Some(array![2.0, -1.0, 0.5, -0.3]),
        };
        assert_eq!(build_mask(&spec).unwrap(), array![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn binarize_rejects_short_input() {
        assert!(binarize_learned_mask(&array![1.0].view()).is_err());
    }

    #[test]
    fn binarize_simple() {
        let b = binarize_learned_mask(&array![-1.0, 2.0, -3.0].view()).unwrap();
        assert_eq!(b.mask, array![0.0, 1.0, 0.0]);
        assert_eq!(b.repaired_index, None);
    }

    #[test]
    fn degeneracy_repair_all_positive_tie() {
        let b = binarize_learned_mask(&array![3.0, 3.0].view()).unwrap();
        assert_eq!(b.mask, array![1.0, 0.0]);
        assert_eq!(b.repaired_index, Some(1));
    }

    #[test]
    fn degeneracy_repair_all_negative_tie() {
        let b = binarize_learned_mask(&array![-3.0, -3.0].view()).unwrap();
        assert_eq!(b.mask, array![1.0, 0.0]);
        assert_eq!(b.repaired_index, Some(0));
    }

    #[test]
    fn degeneracy_repair_flips_extremal() {
        let b = binarize_learned_mask(&array![1.0, 2.0, 0.5].view()).unwrap();
        assert_eq!(b.mask, array![1.0, 1.0, 0.0]);
        assert_eq!(b.repaired_index, Some(2));
        let b = binarize_learned_mask(&array![-1.0, -0.25, -2.0].view()).unwrap();
        assert_eq!(b.mask, array![0.0, 1.0, 0.0]);
        assert_eq!(b.repaired_index, Some(1));
    }

    #[test]
    fn every_mask_contains_both_values() {
        for layer in 0..6 {
            for dim in 2..9 {
                for strategy in [MaskStrategy::Checkerboard, MaskStrategy::Dimwise] {
                    let m = build_mask(&MaskSpec::fixed(strategy, layer, dim)).unwrap();
                    assert!(m.iter().any(|&b| b == 1.0) && m.iter().any(|&b| b == 0.0));
                }
                let m = build_mask(&MaskSpec::learned_from_checkerboard(layer, dim)).unwrap();
                assert!(m.iter().any(|&b| b == 1.0) && m.iter().any(|&b| b == 0.0));
            }
        }
    }

    #[test]
    fn logit_length_mismatch_rejected() {
        let spec = MaskSpec {
            strategy: MaskStrategy::Learned,
            layer_index: 0,
            dim: 4,
            logits: Some(array![1.0, -1.0]),
        };
        assert!(build_mask(&spec).is_err());
    }
}
