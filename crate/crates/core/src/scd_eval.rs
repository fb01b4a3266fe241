//! Alignment of two periods, cosine change scores, Spearman evaluation
//! against gold ratings, and leave-one-out axis importance.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{EmbeddingMatrix, GoldRatings, SimilarityPair, TargetList};
use crate::linalg;
use crate::par;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("zero-norm representation for {0:?}")]
    ZeroVector(String),
    #[error("target {0:?} is missing from the vocabulary")]
    MissingTarget(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("only {0} similarity pairs are in vocabulary; need at least 2")]
    TooFewPairs(usize),
    #[error("periods do not share an identically ordered vocabulary")]
    VocabMismatch,
    #[error("no target has a gold rating")]
    NoScorableTargets,
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Orthogonal `W` minimising `‖y W − x‖_F`, and `y W`.
pub fn procrustes_align(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if x.shape() != y.shape() {
        return Err(EvalError::ShapeMismatch(x.shape(), y.shape()));
    }
    if x.nrows() < x.ncols() {
        log::warn!("Procrustes with fewer rows ({}) than dimensions ({})", x.nrows(), x.ncols());
    }
    let m = y.transpose() * x;
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested u"), svd.v_t.expect("requested v_t"));
    let w = u * v_t;
    let aligned = y * &w;
    Ok((w, aligned))
}

/// Which representation a score was computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Raw,
    Pca,
    Ica,
    Merged,
}

/// Two periods over the same, identically ordered vocabulary.
#[derive(Debug, Clone)]
pub struct ScdDataset {
    pub period1: EmbeddingMatrix,
    pub period2: EmbeddingMatrix,
    pub targets: TargetList,
    pub gold: GoldRatings,
}

impl ScdDataset {
    pub fn new(period1: EmbeddingMatrix, period2: EmbeddingMatrix, targets: TargetList, gold: GoldRatings) -> Result<Self> {
        if period1.vocab() != period2.vocab() {
            return Err(EvalError::VocabMismatch);
        }
        for w in targets.words() {
            if gold.get(w).is_some() && !period1.contains(w) {
                return Err(EvalError::MissingTarget(w.clone()));
            }
        }
        Ok(Self { period1, period2, targets, gold })
    }

    /// Targets with a gold rating, lexicographically sorted, with their vocab rows.
    pub fn rated_targets(&self) -> Result<Vec<(String, usize, f64)>> {
        let mut out: Vec<(String, usize, f64)> = Vec::new();
        for w in self.targets.words() {
            if let Some(g) = self.gold.get(w) {
                let row = self.period1.index_of(w).ok_or_else(|| EvalError::MissingTarget(w.clone()))?;
                out.push((w.clone(), row, g));
            }
        }
        if out.is_empty() {
            return Err(EvalError::NoScorableTargets);
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}

/// Per-period representations in some space, rows aligned with the dataset vocabulary.
#[derive(Debug, Clone, Copy)]
pub struct PairedSpace<'a> {
    pub kind: SpaceKind,
    pub first: &'a DMatrix<f64>,
    pub second: &'a DMatrix<f64>,
}

/// `1 − cos` over the coordinates not equal to `skip`.
fn cosine_distance(a: &[f64], b: &[f64], skip: Option<usize>) -> Option<f64> {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if Some(i) == skip {
            continue;
        }
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return None;
    }
    Some(1.0 - ab / (aa.sqrt() * bb.sqrt()))
}

fn row_vec(m: &DMatrix<f64>, r: usize) -> Vec<f64> {
    m.row(r).iter().copied().collect()
}

fn check_space(d: &ScdDataset, space: &PairedSpace) -> Result<()> {
    let n = d.period1.len();
    if space.first.nrows() != n || space.second.shape() != space.first.shape() {
        return Err(EvalError::ShapeMismatch(space.first.shape(), space.second.shape()));
    }
    Ok(())
}

/// `1 − cos(e1, e2)` per target (targets without a rating included), higher = more change.
pub fn change_scores(d: &ScdDataset, space: &PairedSpace) -> Result<BTreeMap<String, f64>> {
    check_space(d, space)?;
    let mut out = BTreeMap::new();
    for w in d.targets.words() {
        let r = d.period1.index_of(w).ok_or_else(|| EvalError::MissingTarget(w.clone()))?;
        let s = cosine_distance(&row_vec(space.first, r), &row_vec(space.second, r), None)
            .ok_or_else(|| EvalError::ZeroVector(w.clone()))?;
        out.insert(w.clone(), s);
    }
    Ok(out)
}

/// Average ranks (1-based); tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EvalError::DegenerateInput("vectors differ in length"));
    }
    if a.len() < 2 {
        return Err(EvalError::DegenerateInput("need at least 2 observations"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(EvalError::DegenerateInput("non-finite value"));
    }
    let distinct = |v: &[f64]| v.iter().any(|x| *x != v[0]);
    if !distinct(a) || !distinct(b) {
        return Err(EvalError::DegenerateInput("constant vector"));
    }
    Ok(pearson(&average_ranks(a), &average_ranks(b)))
}

/// Target rows of both periods plus gold scores, sorted by target word.
struct TargetRows {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    words: Vec<String>,
    gold: Vec<f64>,
}

impl TargetRows {
    fn collect(d: &ScdDataset, space: &PairedSpace) -> Result<Self> {
        check_space(d, space)?;
        let rated = d.rated_targets()?;
        Ok(Self {
            first: rated.iter().map(|(_, r, _)| row_vec(space.first, *r)).collect(),
            second: rated.iter().map(|(_, r, _)| row_vec(space.second, *r)).collect(),
            words: rated.iter().map(|(w, _, _)| w.clone()).collect(),
            gold: rated.iter().map(|(_, _, g)| *g).collect(),
        })
    }

    fn evaluate(&self, skip: Option<usize>) -> Result<f64> {
        let predicted = self
            .first
            .iter()
            .zip(&self.second)
            .zip(&self.words)
            .map(|((a, b), w)| cosine_distance(a, b, skip).ok_or_else(|| EvalError::ZeroVector(w.clone())))
            .collect::<Result<Vec<_>>>()?;
        spearman(&predicted, &self.gold)
    }
}

/// Spearman between change scores and gold over rated targets (lexicographic order).
pub fn evaluate_ranking(d: &ScdDataset, space: &PairedSpace) -> Result<f64> {
    TargetRows::collect(d, space)?.evaluate(None)
}

/// `values[i] = E(all axes) − E(all axes except i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub values: Vec<f64>,
    pub base_score: f64,
}

impl ImportanceVector {
    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Leave-one-out importance of every axis of `space` (normally the joint ICA space).
pub fn axis_importance(d: &ScdDataset, space: &PairedSpace) -> Result<ImportanceVector> {
    let rows = TargetRows::collect(d, space)?;
    let base_score = rows.evaluate(None)?;
    let values = par::map_range(space.first.ncols(), |axis| rows.evaluate(Some(axis)).map(|e| base_score - e))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ImportanceVector { values, base_score })
}

/// Spearman between cosine similarity and human scores over in-vocabulary pairs.
/// Returns the correlation and the number of skipped pairs.
pub fn similarity_benchmark(emb: &EmbeddingMatrix, pairs: &[SimilarityPair]) -> Result<(f64, usize)> {
    let mut sims = Vec::new();
    let mut human = Vec::new();
    for p in pairs {
        let (Some(a), Some(b)) = (emb.index_of(&p.first), emb.index_of(&p.second)) else { continue };
        if let Some(c) = linalg::cosine(&emb.row(a), &emb.row(b)) {
            sims.push(c);
            human.push(p.score);
        }
    }
    if sims.len() < 2 {
        return Err(EvalError::TooFewPairs(sims.len()));
    }
    Ok((spearman(&sims, &human)?, pairs.len() - sims.len()))
}

/// `word<TAB>score` lines.
pub fn write_scores<W: Write>(scores: &BTreeMap<String, f64>, out: &mut W) -> std::io::Result<()> {
    for (w, s) in scores {
        writeln!(out, "{w}\t{s}")?;
    }
    Ok(())
}
