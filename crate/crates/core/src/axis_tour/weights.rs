use nalgebra::DMatrix;

use super::{MeaningMode, Result, TourError, WeightMatrix};
use crate::linalg;
use crate::par;

/// Row indices of the `n` largest entries of `column`, descending, ties by
/// ascending row index.
pub fn top_indices(column: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..column.len()).collect();
    let cmp = |&a: &usize, &b: &usize| column[b].total_cmp(&column[a]).then(a.cmp(&b));
    let n = n.min(idx.len());
    if n < idx.len() && n > 0 {
        idx.select_nth_unstable_by(n - 1, cmp);
        idx.truncate(n);
    }
    idx.sort_by(cmp);
    idx.truncate(n);
    idx
}

/// Mean of the `space` rows of the `top_n` words scoring highest on `axis`
/// of `sources`. Pass `sources` as `space` for ICA-space centroids.
pub fn axis_centroid(sources: &DMatrix<f64>, space: &DMatrix<f64>, axis: usize, top_n: usize) -> Result<Vec<f64>> {
    if axis >= sources.ncols() {
        return Err(TourError::BadAxis { axis, count: sources.ncols() });
    }
    if top_n == 0 || top_n > sources.nrows() {
        return Err(TourError::BadTopN { got: top_n, max: sources.nrows() });
    }
    assert_eq!(sources.nrows(), space.nrows(), "sources and centroid space must share rows");
    let column: Vec<f64> = sources.column(axis).iter().copied().collect();
    let rows = top_indices(&column, top_n);
    let mut centroid = vec![0.0; space.ncols()];
    for &r in &rows {
        for (c, acc) in centroid.iter_mut().enumerate() {
            *acc += space[(r, c)];
        }
    }
    let n = rows.len() as f64;
    centroid.iter_mut().for_each(|v| *v /= n);
    Ok(centroid)
}

/// Meaning weights from the cosine between axis centroids.
pub fn meaning_weight_matrix(
    sources: &DMatrix<f64>,
    space: &DMatrix<f64>,
    top_n: usize,
    mode: MeaningMode,
) -> Result<WeightMatrix> {
    let m = sources.ncols();
    if m == 0 {
        return Err(TourError::Empty);
    }
    let centroids = par::map_range(m, |a| axis_centroid(sources, space, a, top_n))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    if let Some(axis) = centroids.iter().position(|c| c.iter().all(|&v| v == 0.0)) {
        return Err(TourError::ZeroCentroid(axis));
    }
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))).collect();
    let sims = par::map_slice(&pairs, |&(i, j)| {
        linalg::cosine(&centroids[i], &centroids[j]).expect("centroids checked nonzero")
    });
    let mut values = vec![0.0; m * m];
    for (&(i, j), &cos) in pairs.iter().zip(&sims) {
        let w = match mode {
            MeaningMode::Distance => 1.0 - cos,
            MeaningMode::Literal => cos,
        };
        values[i * m + j] = w;
        values[j * m + i] = w;
    }
    WeightMatrix::new(m, values)
}

/// `w(i, j) = |imp(j) - imp(i)|`.
pub fn change_weight_matrix(importance: &[f64]) -> Result<WeightMatrix> {
    if importance.is_empty() {
        return Err(TourError::Empty);
    }
    if importance.iter().any(|v| !v.is_finite()) {
        return Err(TourError::InvalidWeights("importance has non-finite entries".into()));
    }
    WeightMatrix::from_fn(importance.len(), |i, j| (importance[j] - importance[i]).abs())
}

/// Min-max scale the off-diagonal entries to `[0, 1]`; constant matrices map to zeros.
pub fn min_max_normalize(w: &WeightMatrix) -> WeightMatrix {
    let m = w.size();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                lo = lo.min(w.get(i, j));
                hi = hi.max(w.get(i, j));
            }
        }
    }
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return WeightMatrix::from_fn(m, |_, _| 0.0).expect("zeros are valid");
    }
    WeightMatrix::from_fn(m, |i, j| ((w.get(i, j) - lo) / span).clamp(0.0, 1.0)).expect("normalized is valid")
}

/// `λ·norm(wc) + (1-λ)·norm(wm)`.
pub fn combine_weights(wc: &WeightMatrix, wm: &WeightMatrix, lambda: f64) -> Result<WeightMatrix> {
    if wc.size() != wm.size() {
        return Err(TourError::SizeMismatch(wc.size(), wm.size()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(TourError::BadLambda(lambda));
    }
    let c = min_max_normalize(wc);
    let m = min_max_normalize(wm);
    WeightMatrix::from_fn(wc.size(), |i, j| lambda * c.get(i, j) + (1.0 - lambda) * m.get(i, j))
}
