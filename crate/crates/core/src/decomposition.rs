//! PCA whitening, symmetric FastICA with a logcosh contrast, and skewness.
//!
//! All moments use the population convention (divisor `n`). After FastICA
//! every axis is sign-flipped so that its skewness is non-negative, which
//! makes heavy tails point in the positive direction and lets the axis be
//! read off its largest entries.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::par;

#[derive(Debug, Error)]
pub enum DecompositionError {
    #[error("need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("zero variance")]
    ZeroVariance,
    #[error("invalid component count {k} for a {n}x{d} matrix")]
    BadDimension { k: usize, n: usize, d: usize },
    #[error("requested {requested} components but the centered matrix has rank {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("FastICA did not converge within {0} iterations")]
    ConvergenceError(usize),
    #[error("invalid FastICA option: {0}")]
    BadOption(&'static str),
    #[error("model has {expected} input columns, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed model file: {0}")]
    Malformed(&'static str),
}

pub type Result<T> = std::result::Result<T, DecompositionError>;

const RANK_TOL: f64 = 1e-10;

/// Population skewness `m3 / m2^{3/2}`.
pub fn skewness(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(DecompositionError::TooShort { need: 2, got: values.len() });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &v in values {
        let c = v - mean;
        m2 += c * c;
        m3 += c * c * c;
    }
    m2 /= n;
    m3 /= n;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m2 <= (f64::EPSILON * scale).powi(2) {
        return Err(DecompositionError::ZeroVariance);
    }
    Ok(m3 / m2.powf(1.5))
}

/// Axis indices by descending skewness, ties by ascending index.
pub fn skewness_order(skew: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..skew.len()).collect();
    order.sort_by(|&a, &b| skew[b].total_cmp(&skew[a]).then(a.cmp(&b)));
    order
}

/// Centering plus projection on the top-`k` right singular vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `k x d`, orthonormal rows.
    pub components: DMatrix<f64>,
    /// Non-increasing, strictly positive.
    pub singular_values: Vec<f64>,
    /// Rows of the fitting matrix; the whitening scale is `s / sqrt(n)`.
    pub n_samples: usize,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    /// `(x - mean) Vᵀ` without rescaling.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(DecompositionError::ShapeMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(linalg::center(x, &self.mean) * self.components.transpose())
    }

    /// Projection scaled to unit variance on the fitting data.
    pub fn whiten(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut p = self.project(x)?;
        let root_n = (self.n_samples as f64).sqrt();
        for (j, mut col) in p.column_iter_mut().enumerate() {
            col *= root_n / self.singular_values[j];
        }
        Ok(p)
    }
}

/// Center `x` and whiten its top-`k` principal directions.
///
/// Output columns have zero mean and unit population variance.
pub fn pca_whiten(x: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, PcaModel)> {
    let (n, d) = x.shape();
    if k == 0 || n < 2 || k > d || k > n - 1 {
        return Err(DecompositionError::BadDimension { k, n, d });
    }
    let mean = linalg::column_means(x);
    let centered = linalg::center(x, &mean);
    let (sv, rows) = linalg::right_singular(&centered);
    let largest = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| largest > 0.0 && s > RANK_TOL * largest).count();
    if rank < k {
        return Err(DecompositionError::RankDeficient { requested: k, rank });
    }
    let mut components = rows.rows(0, k).into_owned();
    // deterministic sign: largest-magnitude loading positive
    for mut row in components.row_iter_mut() {
        let pivot = row.iter().fold(0.0f64, |best, &v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            row.neg_mut();
        }
    }
    let model = PcaModel { mean, components, singular_values: sv[..k].to_vec(), n_samples: n };
    let whitened = model.whiten(x)?;
    Ok((whitened, model))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastIcaOptions {
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Return the last iterate instead of `ConvergenceError` when `max_iter` is hit.
    pub accept_partial: bool,
}

impl Default for FastIcaOptions {
    fn default() -> Self {
        Self { seed: 0, tol: 1e-6, max_iter: 500, accept_partial: false }
    }
}

/// Result of running FastICA on whitened data.
#[derive(Debug, Clone, PartialEq)]
pub struct IcaFit {
    /// Orthogonal `k x k`; sources are `whitened · unmixingᵀ`.
    pub unmixing: DMatrix<f64>,
    pub sources: DMatrix<f64>,
    pub skewness: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn tanh_in_place(y: &mut DMatrix<f64>) {
    let mut chunks: Vec<&mut [f64]> = y.as_mut_slice().chunks_mut(8192).collect();
    par::for_each_mut(&mut chunks, |chunk| {
        for v in chunk.iter_mut() {
            *v = v.tanh();
        }
    });
}

const STALL_ITERATIONS: usize = 20;
const GROWTH_ITERATIONS: usize = 10;
const MIN_STEP: f64 = 1.0 / 64.0;
/// Independent seeded starts tried before giving up.
pub const ICA_ATTEMPTS: usize = 4;

/// Relaxed step `decorrelate((1 - mu) w + mu a / s)` on the undecorrelated
/// update `a`, rows sign-matched to `w` and `s` the mean row norm of `a`.
/// A single scalar scale keeps the fixed points of the plain iteration.
fn relaxed_step(w: &DMatrix<f64>, mut a: DMatrix<f64>, mu: f64) -> DMatrix<f64> {
    let k = a.nrows();
    let scale = a.row_iter().map(|r| r.norm()).sum::<f64>() / k as f64;
    if scale.is_nan() || scale <= 0.0 {
        return w.clone();
    }
    for (mut row, old) in a.row_iter_mut().zip(w.row_iter()) {
        let sign = if row.dot(&old) < 0.0 { -1.0 } else { 1.0 };
        row.zip_apply(&old, |n, o| *n = (1.0 - mu) * o + mu * sign * *n / scale);
    }
    linalg::symmetric_decorrelation(&a)
}

/// One run of the iteration from `w`; returns the final matrix, the
/// iterations used and whether it converged.
fn ica_attempt(whitened: &DMatrix<f64>, mut w: DMatrix<f64>, opts: &FastIcaOptions) -> (DMatrix<f64>, usize, bool) {
    let (n, k) = whitened.shape();
    let nf = n as f64;
    // step size of the relaxed update; halved on stalls, doubled on steady progress
    let mut mu = 1.0;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    let mut improving = 0;
    for it in 1..=opts.max_iter {
        let mut g = whitened * w.transpose();
        tanh_in_place(&mut g);
        let mut raw = g.transpose() * whitened / nf;
        for (i, gcol) in g.column_iter().enumerate() {
            let mean_deriv = gcol.iter().map(|t| 1.0 - t * t).sum::<f64>() / nf;
            for j in 0..k {
                raw[(i, j)] -= mean_deriv * w[(i, j)];
            }
        }
        let next = linalg::symmetric_decorrelation(&raw);
        let lim = (0..k)
            .map(|i| (next.row(i).dot(&w.row(i)).abs() - 1.0).abs())
            .fold(0.0f64, f64::max);
        if lim < opts.tol {
            return (next, it, true);
        }
        w = if mu < 1.0 { relaxed_step(&w, raw, mu) } else { next };
        if lim < best {
            best = lim;
            stalled = 0;
            improving += 1;
            if improving >= GROWTH_ITERATIONS && mu < 1.0 {
                mu = (2.0 * mu).min(1.0);
                improving = 0;
            }
        } else {
            stalled += 1;
            improving = 0;
            if stalled >= STALL_ITERATIONS && mu > MIN_STEP {
                mu *= 0.5;
                best = lim;
                stalled = 0;
                log::debug!("FastICA stalled at iteration {it}; step size now {mu}");
            }
        }
    }
    (w, opts.max_iter, false)
}

/// Symmetric FastICA (logcosh, `a = 1`) on already whitened data.
///
/// When the fixed-point iteration stops making progress (typically a limit
/// cycle on small samples), it switches to a relaxed step with an adaptive
/// step size. Convergence is always measured on the plain step. A run that
/// exhausts `max_iter` is restarted from a fresh seeded rotation, up to
/// [`ICA_ATTEMPTS`] runs; `iterations` counts all of them.
pub fn fast_ica(whitened: &DMatrix<f64>, opts: &FastIcaOptions) -> Result<IcaFit> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(DecompositionError::BadOption("tol must be positive"));
    }
    if opts.max_iter == 0 {
        return Err(DecompositionError::BadOption("max_iter must be at least 1"));
    }
    let (n, k) = whitened.shape();
    if n < 2 || k == 0 {
        return Err(DecompositionError::BadDimension { k, n, d: k });
    }
    let mut iterations = 0;
    let mut result = None;
    for attempt in 0..ICA_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(attempt as u64);
        let w0 = linalg::symmetric_decorrelation(&linalg::random_orthogonal(k, &mut rng));
        let (w, used, ok) = ica_attempt(whitened, w0, opts);
        iterations += used;
        result = Some((w, ok));
        if ok {
            break;
        }
        log::debug!("FastICA attempt {attempt} did not converge; restarting");
    }
    let (mut w, converged) = result.expect("at least one attempt");
    if !converged && !opts.accept_partial {
        return Err(DecompositionError::ConvergenceError(iterations));
    }
    if !converged {
        log::warn!("FastICA stopped after {iterations} iterations without converging");
    }

    let mut sources = whitened * w.transpose();
    let mut skew = Vec::with_capacity(k);
    for j in 0..k {
        let col: Vec<f64> = sources.column(j).iter().copied().collect();
        let mut g = skewness(&col)?;
        if g < 0.0 {
            g = -g;
            sources.column_mut(j).neg_mut();
            w.row_mut(j).neg_mut();
        }
        skew.push(g);
    }
    Ok(IcaFit { unmixing: w, sources, skewness: skew, iterations, converged })
}

/// PCA whitening followed by FastICA, with the fitted sources kept.
#[derive(Debug, Clone, PartialEq)]
pub struct IcaModel {
    pub pca: PcaModel,
    pub unmixing: DMatrix<f64>,
    /// Per-axis skewness, all `>= 0`.
    pub skewness: Vec<f64>,
    /// `n x k` ICA-space rows of the fitting matrix.
    pub sources: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl IcaModel {
    pub fn fit(x: &DMatrix<f64>, k: usize, opts: &FastIcaOptions) -> Result<Self> {
        let (whitened, pca) = pca_whiten(x, k)?;
        let fit = fast_ica(&whitened, opts)?;
        Ok(Self {
            pca,
            unmixing: fit.unmixing,
            skewness: fit.skewness,
            sources: fit.sources,
            iterations: fit.iterations,
            converged: fit.converged,
        })
    }

    pub fn axis_count(&self) -> usize {
        self.unmixing.nrows()
    }

    /// Map raw rows into the ICA space.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.pca.whiten(x)? * self.unmixing.transpose())
    }

    pub fn skewness_order(&self) -> Vec<usize> {
        skewness_order(&self.skewness)
    }

    pub fn params(&self) -> IcaParams {
        IcaParams {
            mean: self.pca.mean.iter().copied().collect(),
            components: linalg::to_rows(&self.pca.components),
            singular_values: self.pca.singular_values.clone(),
            n_samples: self.pca.n_samples,
            unmixing: linalg::to_rows(&self.unmixing),
            skewness: self.skewness.clone(),
            iterations: self.iterations,
            converged: self.converged,
        }
    }

    /// Rebuild a model from stored parameters and the data it was fitted on.
    pub fn from_params(params: &IcaParams, x: &DMatrix<f64>) -> Result<Self> {
        let components = linalg::from_rows(&params.components).ok_or(DecompositionError::Malformed("components"))?;
        let unmixing = linalg::from_rows(&params.unmixing).ok_or(DecompositionError::Malformed("unmixing"))?;
        let k = components.nrows();
        if params.mean.len() != components.ncols()
            || params.singular_values.len() != k
            || unmixing.shape() != (k, k)
            || params.skewness.len() != k
        {
            return Err(DecompositionError::Malformed("inconsistent shapes"));
        }
        let pca = PcaModel {
            mean: DVector::from_vec(params.mean.clone()),
            components,
            singular_values: params.singular_values.clone(),
            n_samples: params.n_samples,
        };
        let mut model = Self {
            pca,
            unmixing,
            skewness: params.skewness.clone(),
            sources: DMatrix::zeros(0, k),
            iterations: params.iterations,
            converged: params.converged,
        };
        model.sources = model.transform(x)?;
        Ok(model)
    }
}

/// JSON form of an [`IcaModel`] (without the sources).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaParams {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub n_samples: usize,
    pub unmixing: Vec<Vec<f64>>,
    pub skewness: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl IcaParams {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// ICA on all axes, then PCA of the sources down to `k` (benchmark mode only).
pub fn pca_of_ica(x: &DMatrix<f64>, k: usize, opts: &FastIcaOptions) -> Result<DMatrix<f64>> {
    let full = x.ncols().min(x.nrows().saturating_sub(1));
    let ica = IcaModel::fit(x, full, opts)?;
    let (_, pca) = pca_whiten(&ica.sources, k)?;
    pca.project(&ica.sources)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{StandardNormal, Uniform};

    fn sample_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
        let c = linalg::center(x, &linalg::column_means(x));
        c.transpose() * &c / x.nrows() as f64
    }

    #[test]
    fn skewness_hand_values() {
        // mean 1/4; m2 = 3/16; m3 = 3/32 → (3/32)/(3/16)^{3/2} = 2/sqrt(3)
        let g = skewness(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((g - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(skewness(&[-1.0, 0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(skewness(&[5.0, 5.0, 5.0]), Err(DecompositionError::ZeroVariance)));
        assert!(matches!(skewness(&[1.0]), Err(DecompositionError::TooShort { .. })));
    }

    #[test]
    fn skewness_order_rules() {
        assert_eq!(skewness_order(&[0.5, 2.0, 1.0]), vec![1, 2, 0]);
        assert_eq!(skewness_order(&[1.0, 1.0, 1.0]), vec![0, 1, 2]);
        assert_eq!(skewness_order(&[3.0, 2.0, 1.0]), vec![0, 1, 2]);
    }

    #[test]
    fn whiten_rank_one_example() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
        let (z, pca) = pca_whiten(&x, 1).unwrap();
        assert!((pca.components[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(pca.components[(0, 1)].abs() < 1e-12);
        let s = (1.5f64).sqrt() * pca.components[(0, 0)].signum();
        for (got, want) in z.iter().zip([1.0, -1.0, 0.0]) {
            assert!((got - want * s).abs() < 1e-12, "{got} vs {}", want * s);
        }
    }

    #[test]
    fn whiten_full_rank_gives_identity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(200, 6, |_, c| rng.sample::<f64, _>(StandardNormal) * (c + 1) as f64 + c as f64);
        let (z, pca) = pca_whiten(&x, 6).unwrap();
        assert!(linalg::max_abs_diff(&sample_cov(&z), &DMatrix::identity(6, 6)) < 1e-8);
        let gram = &pca.components * pca.components.transpose();
        assert!(linalg::max_abs_diff(&gram, &DMatrix::identity(6, 6)) < 1e-8);
        assert!(pca.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rank_deficiency_detected() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 3.0, 6.0, 9.0, 0.0, 0.0, 0.0]);
        assert!(matches!(pca_whiten(&x, 2), Err(DecompositionError::RankDeficient { requested: 2, rank: 1 })));
        assert!(matches!(pca_whiten(&x, 4), Err(DecompositionError::BadDimension { .. })));
    }

    fn uniform_sources(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        DMatrix::from_fn(n, m, |_, _| rng.sample(u))
    }

    fn abs_corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        (sab / (saa * sbb).sqrt()).abs()
    }

    #[test]
    fn recovers_two_uniform_sources() {
        let s = uniform_sources(10_000, 2, 5);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.4, 1.0]);
        let x = &s * a.transpose();
        let model = IcaModel::fit(&x, 2, &FastIcaOptions { seed: 1, ..Default::default() }).unwrap();
        assert!(model.converged);
        let col = |m: &DMatrix<f64>, j: usize| m.column(j).iter().copied().collect::<Vec<_>>();
        let c00 = abs_corr(&col(&model.sources, 0), &col(&s, 0));
        let c01 = abs_corr(&col(&model.sources, 0), &col(&s, 1));
        let c10 = abs_corr(&col(&model.sources, 1), &col(&s, 0));
        let c11 = abs_corr(&col(&model.sources, 1), &col(&s, 1));
        let best = ((c00 + c11) / 2.0).max((c01 + c10) / 2.0);
        assert!(c00.max(c01) >= 0.95 && c10.max(c11) >= 0.95 && best >= 0.95);
        assert!(linalg::orthogonality_defect(&model.unmixing) < 1e-6);
        assert!(model.skewness.iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn sources_are_standardised() {
        let s = uniform_sources(2000, 3, 9);
        let model = IcaModel::fit(&s, 3, &FastIcaOptions::default()).unwrap();
        let cov = sample_cov(&model.sources);
        for j in 0..3 {
            let mean = model.sources.column(j).sum() / 2000.0;
            assert!(mean.abs() < 1e-8);
            assert!((cov[(j, j)] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let s = uniform_sources(1000, 3, 2);
        let opts = FastIcaOptions { seed: 42, ..Default::default() };
        let a = IcaModel::fit(&s, 3, &opts).unwrap();
        let b = par::sequential(|| IcaModel::fit(&s, 3, &opts).unwrap());
        assert_eq!(a.unmixing.as_slice(), b.unmixing.as_slice());
    }

    #[test]
    fn gaussian_input_never_claims_false_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = DMatrix::from_fn(2000, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let opts = FastIcaOptions { seed: 0, tol: 1e-6, max_iter: 200, accept_partial: false };
        match IcaModel::fit(&g, 3, &opts) {
            Err(DecompositionError::ConvergenceError(800)) => {}
            Ok(m) => {
                // a converged answer is an arbitrary rotation; it must still be a valid model
                assert!(m.converged);
                assert!(linalg::orthogonality_defect(&m.unmixing) < 1e-6);
            }
            Err(e) => panic!("unexpected error {e}"),
        }
        let partial = IcaModel::fit(&g, 3, &FastIcaOptions { accept_partial: true, max_iter: 3, ..opts }).unwrap();
        assert!(!partial.converged);
        assert_eq!(partial.iterations, 3 * ICA_ATTEMPTS);
    }

    #[test]
    fn params_round_trip_rebuilds_sources() {
        let s = uniform_sources(500, 3, 4);
        let model = IcaModel::fit(&s, 3, &FastIcaOptions::default()).unwrap();
        let json = serde_json::to_string(&model.params()).unwrap();
        let params: IcaParams = serde_json::from_str(&json).unwrap();
        let back = IcaModel::from_params(&params, &s).unwrap();
        assert!(linalg::max_abs_diff(&back.sources, &model.sources) < 1e-10);
    }

    #[test]
    fn bad_options_rejected() {
        let s = uniform_sources(100, 2, 1);
        assert!(fast_ica(&s, &FastIcaOptions { tol: 0.0, ..Default::default() }).is_err());
        assert!(fast_ica(&s, &FastIcaOptions { max_iter: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn pca_of_ica_shape() {
        let s = uniform_sources(300, 4, 6);
        let out = pca_of_ica(&s, 2, &FastIcaOptions::default()).unwrap();
        assert_eq!(out.shape(), (300, 2));
    }
}
