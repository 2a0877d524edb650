//! Alpha dropout with a counter-based mask generator.
//!
//! Dropped units are set to the SELU saturation value `-λα` and the result is
//! affinely corrected so a zero-mean, unit-variance input keeps both moments.
//! Masks are a pure function of `(seed, layer, step, index)`, so a training run
//! replays bit-for-bit regardless of evaluation order.

use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// SELU `λ·α`; dropped activations are pinned to its negation.
const SELU_LAMBDA_ALPHA: f64 = 1.050_700_987_355_480_5 * 1.673_263_242_354_377_3;

/// Identifies one dropout mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DropoutKey {
    pub seed: u64,
    pub layer: u64,
    pub step: u64,
}

impl DropoutKey {
    pub fn new(seed: u64, layer: u64, step: u64) -> Self {
        DropoutKey { seed, layer, step }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in `[0, 1)` addressed by `(key, index)`.
pub fn counter_uniform(key: DropoutKey, index: u64) -> f64 {
    let h = splitmix64(
        splitmix64(splitmix64(splitmix64(key.seed) ^ key.layer) ^ key.step) ^ index,
    );
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The saturation value dropped units take before the affine correction.
pub fn saturation() -> f64 {
    -SELU_LAMBDA_ALPHA
}

/// Affine correction `(a, b)` applied after masking so the output keeps
/// zero mean and unit variance for a standard-normal input.
pub fn affine_correction(p: f64) -> (f64, f64) {
    let keep = 1.0 - p;
    let sat = saturation();
    let a = (keep + sat * sat * keep * p).powf(-0.5);
    let b = -a * sat * p;
    (a, b)
}

pub(crate) fn check_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Contract(format!("dropout rate {p} outside [0, 1)")));
    }
    Ok(())
}

/// Keep mask of length `len`: `true` keeps the unit.
pub fn keep_mask(len: usize, p: f64, key: DropoutKey) -> Vec<bool> {
    (0..len as u64).map(|i| counter_uniform(key, i) >= p).collect()
}

/// Applies the masked affine map to `x` given a keep mask.
pub(crate) fn apply_mask(x: &Tensor, keep: &[bool], p: f64) -> Tensor {
    let (a, b) = affine_correction(p);
    let sat = saturation();
    let data = x
        .data()
        .iter()
        .zip(keep)
        .map(|(&v, &k)| a * if k { v } else { sat } + b)
        .collect();
    Tensor::new(x.rows(), x.cols(), data).expect("mask preserves shape")
}

/// Eager alpha dropout. Identity in eval mode or when `p == 0`.
pub fn alpha_dropout(x: &Tensor, p: f64, key: DropoutKey, training: bool) -> Result<Tensor> {
    check_rate(p)?;
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let keep = keep_mask(x.len(), p, key);
    Ok(apply_mask(x, &keep, p))
}
