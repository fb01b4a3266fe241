//! Merge a linear axis order into `k` contiguous groups.
//!
//! Group `r` becomes one output dimension: a unit-norm combination of its
//! member axes, weighted by `γ^α` (skewness raised to `alpha`).

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MergeError {
    #[error("k must be in 1..={m}, got {k}")]
    BadK { k: usize, m: usize },
    #[error("every skewness value in interval {0} is zero")]
    AllZeroSkewInterval(usize),
    #[error("invalid skewness: {0}")]
    BadSkewness(String),
    #[error("alpha must be finite and >= 0, got {0}")]
    BadAlpha(f64),
    #[error("intervals do not tile 0..{0}")]
    BadIntervals(usize),
    #[error("matrix has {got} columns, merge map covers {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, MergeError>;

/// `k` balanced contiguous blocks over `0..m`; the first `m % k` blocks get one extra.
pub fn partition(m: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k == 0 || k > m {
        return Err(MergeError::BadK { k, m });
    }
    let (base, extra) = (m / k, m % k);
    let mut start = 0;
    Ok((0..k)
        .map(|r| {
            let len = base + usize::from(r < extra);
            let range = start..start + len;
            start += len;
            range
        })
        .collect())
}

/// Intervals over tour positions plus per-position merge coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeMap {
    pub alpha: f64,
    pub intervals: Vec<Range<usize>>,
    /// `coefficients[r][i]` weights position `intervals[r].start + i`.
    pub coefficients: Vec<Vec<f64>>,
}

impl MergeMap {
    pub fn positions(&self) -> usize {
        self.intervals.last().map_or(0, |r| r.end)
    }

    pub fn k(&self) -> usize {
        self.intervals.len()
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)
    }
}

fn check_tiling(intervals: &[Range<usize>], m: usize) -> Result<()> {
    let mut expect = 0;
    for r in intervals {
        if r.start != expect || r.end <= r.start {
            return Err(MergeError::BadIntervals(m));
        }
        expect = r.end;
    }
    if expect != m || intervals.is_empty() {
        return Err(MergeError::BadIntervals(m));
    }
    Ok(())
}

/// `f_r(ℓ) = γ_ℓ^α / sqrt(Σ_{i ∈ I_r} γ_i^{2α})` for `ℓ ∈ I_r`.
///
/// `gamma` is indexed by tour position. `0^0` is taken as 1, so `alpha = 0`
/// gives uniform weights.
pub fn merge_weights(gamma: &[f64], intervals: &[Range<usize>], alpha: f64) -> Result<MergeMap> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(MergeError::BadAlpha(alpha));
    }
    if let Some(g) = gamma.iter().find(|g| !g.is_finite() || **g < 0.0) {
        return Err(MergeError::BadSkewness(format!("{g} is negative or non-finite")));
    }
    check_tiling(intervals, gamma.len())?;
    let mut coefficients = Vec::with_capacity(intervals.len());
    for (r, range) in intervals.iter().enumerate() {
        let powered: Vec<f64> = gamma[range.clone()].iter().map(|g| g.powf(alpha)).collect();
        let norm = powered.iter().map(|p| p * p).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(MergeError::AllZeroSkewInterval(r));
        }
        coefficients.push(powered.iter().map(|p| p / norm).collect());
    }
    Ok(MergeMap { alpha, intervals: intervals.to_vec(), coefficients })
}

/// Column `r` of the output is `Σ_{ℓ ∈ I_r} f_r(ℓ) · S[:, ℓ]`.
///
/// `sources` columns must already be in tour order.
pub fn apply_merge(sources: &DMatrix<f64>, map: &MergeMap) -> Result<DMatrix<f64>> {
    if sources.ncols() != map.positions() {
        return Err(MergeError::SizeMismatch { expected: map.positions(), got: sources.ncols() });
    }
    let n = sources.nrows();
    let mut out = DMatrix::zeros(n, map.k());
    for (r, (range, coef)) in map.intervals.iter().zip(&map.coefficients).enumerate() {
        for row in 0..n {
            let mut terms = range.clone().zip(coef).map(|(l, f)| f * sources[(row, l)]);
            let first = terms.next().expect("intervals are non-empty");
            out[(row, r)] = terms.fold(first, |acc, t| acc + t);
        }
    }
    Ok(out)
}

/// Reorder columns by `order` (tour position → axis).
pub fn reorder_columns(m: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), order.len(), |r, c| m[(r, order[c])])
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn partition_rules() {
        assert_eq!(partition(5, 2).unwrap(), vec![0..3, 3..5]);
        assert_eq!(partition(4, 4).unwrap(), vec![0..1, 1..2, 2..3, 3..4]);
        assert_eq!(partition(7, 3).unwrap(), vec![0..3, 3..5, 5..7]);
        assert_eq!(partition(5, 6), Err(MergeError::BadK { k: 6, m: 5 }));
        assert!(partition(5, 0).is_err());
    }

    #[test]
    fn three_four_five() {
        let map = merge_weights(&[3.0, 4.0], &[0..2], 1.0).unwrap();
        assert!((map.coefficients[0][0] - 0.6).abs() < 1e-15);
        assert!((map.coefficients[0][1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn alpha_zero_is_uniform() {
        let map = merge_weights(&[0.0, 2.0, 9.0, 0.1], &[0..4], 0.0).unwrap();
        for &f in &map.coefficients[0] {
            assert!((f - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn singleton_is_one() {
        let map = merge_weights(&[0.3, 7.0], &[0..1, 1..2], 2.0).unwrap();
        assert_eq!(map.coefficients, vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn zero_skew_interval_rejected() {
        assert_eq!(merge_weights(&[1.0, 0.0, 0.0], &[0..1, 1..3], 1.0), Err(MergeError::AllZeroSkewInterval(1)));
        assert!(merge_weights(&[-1.0, 1.0], &[0..2], 1.0).is_err());
        assert!(merge_weights(&[1.0, 1.0], &[0..1], 1.0).is_err());
        assert!(merge_weights(&[1.0, 1.0], &[0..2], -1.0).is_err());
    }

    #[test]
    fn apply_hand_combination() {
        let s = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 0.0]);
        let map = merge_weights(&[3.0, 4.0], &[0..2], 1.0).unwrap();
        let out = apply_merge(&s, &map).unwrap();
        let want = [0.6 * 1.0 + 0.8 * 2.0, -0.6 + 0.8 * 0.5, 0.6 * 3.0];
        for (r, w) in want.iter().enumerate() {
            assert!((out[(r, 0)] - w).abs() < 1e-15);
        }
    }

    #[test]
    fn apply_zero_and_mismatch() {
        let z = DMatrix::zeros(4, 3);
        let map = merge_weights(&[1.0, 2.0, 3.0], &partition(3, 2).unwrap(), 1.0).unwrap();
        assert!(apply_merge(&z, &map).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(apply_merge(&DMatrix::zeros(4, 2), &map), Err(MergeError::SizeMismatch { .. })));
    }

    #[test]
    fn identity_keeps_negative_zero() {
        let s = DMatrix::from_row_slice(1, 2, &[-0.0, 1.5]);
        let map = merge_weights(&[2.0, 0.5], &partition(2, 2).unwrap(), 1.0).unwrap();
        let out = apply_merge(&s, &map).unwrap();
        assert_eq!(out[(0, 0)].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn map_serializes() {
        let map = merge_weights(&[1.0, 2.0, 3.0], &partition(3, 2).unwrap(), 1.0).unwrap();
        let v = serde_json::to_value(&map).unwrap();
        assert!(v["alpha"].is_number() && v["intervals"].is_array() && v["coefficients"].is_array());
    }

    proptest! {
        #[test]
        fn coefficient_norm_and_monotonicity(
            gamma in proptest::collection::vec(0.01f64..10.0, 1..40),
            k_frac in 0.0f64..1.0,
            alpha in prop_oneof![Just(0.5), Just(1.0), Just(2.0)],
        ) {
            let m = gamma.len();
            let k = 1 + ((m - 1) as f64 * k_frac) as usize;
            let map = merge_weights(&gamma, &partition(m, k).unwrap(), alpha).unwrap();
            for (range, coef) in map.intervals.iter().zip(&map.coefficients) {
                let s: f64 = coef.iter().map(|f| f * f).sum();
                prop_assert!((s - 1.0).abs() < 1e-10);
                for (a, fa) in range.clone().zip(coef) {
                    for (b, fb) in range.clone().zip(coef) {
                        if gamma[a] > gamma[b] {
                            prop_assert!(fa > fb);
                        }
                    }
                }
            }
        }

        #[test]
        fn linearity(
            vals in proptest::collection::vec(-5.0f64..5.0, 24),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let s1 = DMatrix::from_fn(4, 6, |r, c| vals[r * 6 + c]);
            let s2 = DMatrix::from_fn(4, 6, |r, c| vals[(r * 6 + c + 7) % 24]);
            let map = merge_weights(&[1.0, 2.0, 0.5, 3.0, 1.0, 4.0], &partition(6, 4).unwrap(), 1.0).unwrap();
            let lhs = apply_merge(&(&s1 * a + &s2 * b), &map).unwrap();
            let rhs = apply_merge(&s1, &map).unwrap() * a + apply_merge(&s2, &map).unwrap() * b;
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
