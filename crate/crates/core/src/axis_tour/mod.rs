//! Ordering ICA axes as a travelling-salesman tour.
//!
//! Axis pairs are weighted by how far apart their meanings are (centroid
//! cosine distance), by how differently they contribute to change detection
//! (importance gap), or by a λ-mix of both. The closed tour of minimum total
//! weight is then cut at its heaviest edge to give a linear order that the
//! merge step can split into contiguous blocks.

mod held_karp;
mod solver;
mod weights;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use held_karp::{held_karp, HELD_KARP_MAX};
pub use solver::{cut_cycle, solve_tour, tour_cost, CutTour};
pub use weights::{
    axis_centroid, change_weight_matrix, combine_weights, meaning_weight_matrix, min_max_normalize, top_indices,
};

#[derive(Debug, Error, PartialEq)]
pub enum TourError {
    #[error("axis {0} has a zero-norm centroid")]
    ZeroCentroid(usize),
    #[error("weight matrices differ in size: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("lambda must lie in [0, 1], got {0}")]
    BadLambda(f64),
    #[error("exact solver supports at most {max} axes, got {0}", max = HELD_KARP_MAX)]
    TooLarge(usize),
    #[error("weight matrix is not a valid symmetric matrix: {0}")]
    InvalidWeights(String),
    #[error("top_n must be in 1..={max}, got {got}")]
    BadTopN { got: usize, max: usize },
    #[error("axis {axis} out of range for {count} axes")]
    BadAxis { axis: usize, count: usize },
    #[error("not a permutation of 0..{0}")]
    InvalidCycle(usize),
    #[error("no axes")]
    Empty,
}

pub type Result<T> = std::result::Result<T, TourError>;

const SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric `m x m` axis-pair weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    size: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    /// Row-major values. Symmetric within 1e-10, diagonal zero, all finite.
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        if size == 0 {
            return Err(TourError::Empty);
        }
        if values.len() != size * size {
            return Err(TourError::InvalidWeights(format!("expected {} values, got {}", size * size, values.len())));
        }
        for i in 0..size {
            if values[i * size + i] != 0.0 {
                return Err(TourError::InvalidWeights(format!("diagonal entry {i} is nonzero")));
            }
            for j in 0..size {
                let (a, b) = (values[i * size + j], values[j * size + i]);
                if !a.is_finite() {
                    return Err(TourError::InvalidWeights(format!("entry ({i}, {j}) is not finite")));
                }
                if (a - b).abs() > SYMMETRY_TOL {
                    return Err(TourError::InvalidWeights(format!("entries ({i}, {j}) and ({j}, {i}) differ")));
                }
            }
        }
        Ok(Self { size, values })
    }

    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = vec![0.0; size * size];
        for i in 0..size {
            for j in (i + 1)..size {
                let v = f(i, j);
                values[i * size + j] = v;
                values[j * size + i] = v;
            }
        }
        Self::new(size, values)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(self.size, |i, j| f(self.get(i, j)))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.size).map(<[f64]>::to_vec).collect()
    }
}

/// A closed tour over axes and the linear order obtained by cutting it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TourOrder {
    pub cycle: Vec<usize>,
    pub cycle_cost: f64,
    pub linear: Vec<usize>,
    /// Removed edge in walk order; `None` for a single axis.
    pub cut_edge: Option<(usize, usize)>,
}

impl TourOrder {
    pub fn from_cycle(cycle: Vec<usize>, w: &WeightMatrix) -> Result<Self> {
        check_permutation(&cycle, w.size())?;
        let cycle_cost = tour_cost(&cycle, w);
        let (linear, cut_edge) = cut_cycle(&cycle, w)?;
        Ok(Self { cycle, cycle_cost, linear, cut_edge })
    }

    /// JSON record including the parameters that produced the tour.
    pub fn record(&self, lambda: f64, seed: u64) -> TourRecord {
        TourRecord {
            cycle: self.cycle.clone(),
            linear: self.linear.clone(),
            cycle_cost: self.cycle_cost,
            cut_edge: self.cut_edge,
            lambda,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TourRecord {
    pub cycle: Vec<usize>,
    pub linear: Vec<usize>,
    pub cycle_cost: f64,
    pub cut_edge: Option<(usize, usize)>,
    pub lambda: f64,
    pub seed: u64,
}

pub(crate) fn check_permutation(p: &[usize], m: usize) -> Result<()> {
    if p.len() != m {
        return Err(TourError::InvalidCycle(m));
    }
    let mut seen = vec![false; m];
    for &i in p {
        if i >= m || std::mem::replace(&mut seen[i], true) {
            return Err(TourError::InvalidCycle(m));
        }
    }
    Ok(())
}

/// How the centroid cosine becomes a weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeaningMode {
    /// `1 - cos`: similar axes are cheap to place next to each other.
    #[default]
    Distance,
    /// Raw cosine similarity.
    Literal,
}

impl std::str::FromStr for MeaningMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "distance" => Ok(Self::Distance),
            "literal" => Ok(Self::Literal),
            other => Err(format!("unknown meaning mode {other:?} (expected distance|literal)")),
        }
    }
}

/// Which rows are averaged into an axis centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentroidSpace {
    /// ICA-space rows.
    #[default]
    Ica,
    /// Rows of the (aligned) input embeddings.
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TourConfig {
    pub lambda: f64,
    pub top_n: usize,
    pub seed: u64,
    pub restarts: usize,
    pub meaning_mode: MeaningMode,
    pub centroid_space: CentroidSpace,
}

impl Default for TourConfig {
    fn default() -> Self {
        Self {
            lambda: 0.25,
            top_n: 10,
            seed: 0,
            restarts: 8,
            meaning_mode: MeaningMode::Distance,
            centroid_space: CentroidSpace::Ica,
        }
    }
}

impl TourConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(TourError::BadLambda(self.lambda));
        }
        if self.top_n == 0 {
            return Err(TourError::BadTopN { got: 0, max: usize::MAX });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_matrix_validation() {
        assert!(WeightMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).is_ok());
        assert!(WeightMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(WeightMatrix::new(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(WeightMatrix::new(2, vec![0.0, f64::NAN, f64::NAN, 0.0]).is_err());
        assert!(WeightMatrix::new(0, vec![]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TourConfig::default().validate().is_ok());
        assert_eq!(TourConfig { lambda: 1.5, ..Default::default() }.validate(), Err(TourError::BadLambda(1.5)));
        assert!(TourConfig { top_n: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn record_serializes_expected_keys() {
        let w = WeightMatrix::from_fn(3, |i, j| (i + j) as f64).unwrap();
        let t = TourOrder::from_cycle(vec![0, 1, 2], &w).unwrap();
        let v = serde_json::to_value(t.record(0.25, 7)).unwrap();
        for key in ["cycle", "linear", "cycle_cost", "cut_edge", "lambda", "seed"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
