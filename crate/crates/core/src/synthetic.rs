//! Synthetic two-period corpora with known change.
//!
//! Period 1 is `S·A` for skewed independent sources `S` and a random
//! orthogonal `A`. Period 2 rotates each target inside a random plane by
//! an angle proportional to its gold score, applies one global rotation to
//! every row, and adds isotropic noise.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::corpus_io::{save_embeddings, EmbeddingFormat, EmbeddingMatrix, GoldRatings, TargetList};
use crate::linalg;
use crate::scd_eval::ScdDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub vocab: usize,
    pub dim: usize,
    pub targets: usize,
    /// Rotation for the largest gold score, in radians.
    pub max_angle: f64,
    /// Noise standard deviation per coordinate.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { vocab: 200, dim: 16, targets: 10, max_angle: 1.2, noise: 0.01, seed: 0 }
    }
}

pub fn word(i: usize) -> String {
    format!("w{i:05}")
}

/// Rotate `x` by `angle` toward a random direction orthogonal to it.
fn rotate_in_random_plane<R: Rng>(x: &[f64], angle: f64, rng: &mut R) -> Vec<f64> {
    let norm = linalg::dot(x, x).sqrt();
    let unit: Vec<f64> = x.iter().map(|v| v / norm).collect();
    let mut u: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
    let proj = linalg::dot(&u, &unit);
    u.iter_mut().zip(&unit).for_each(|(a, b)| *a -= proj * b);
    let un = linalg::dot(&u, &u).sqrt();
    x.iter().zip(&u).map(|(xi, ui)| angle.cos() * xi + angle.sin() * norm * ui / un).collect()
}

pub fn generate(cfg: &SyntheticConfig) -> ScdDataset {
    assert!(cfg.targets >= 2 && cfg.targets <= cfg.vocab && cfg.dim >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, d) = (cfg.vocab, cfg.dim);

    // Exp(1) − 1: zero mean, unit variance, skewness 2
    let sources = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(Exp1) - 1.0);
    let mixing = linalg::random_orthogonal(d, &mut rng);
    let first = &sources * &mixing;

    let target_rows = sample(&mut rng, n, cfg.targets).into_vec();
    let mut order: Vec<usize> = (0..cfg.targets).collect();
    order.shuffle(&mut rng);
    let gold: Vec<f64> = order.iter().map(|&r| (r + 1) as f64 / cfg.targets as f64).collect();

    let mut second = first.clone();
    for (&row, &g) in target_rows.iter().zip(&gold) {
        let x: Vec<f64> = first.row(row).iter().copied().collect();
        let moved = rotate_in_random_plane(&x, g * cfg.max_angle, &mut rng);
        for (c, v) in moved.into_iter().enumerate() {
            second[(row, c)] = v;
        }
    }
    let global = linalg::random_orthogonal(d, &mut rng);
    let mut second = second * global;
    second.iter_mut().for_each(|v| *v += cfg.noise * rng.sample::<f64, _>(StandardNormal));

    let vocab: Vec<String> = (0..n).map(word).collect();
    let targets: Vec<String> = target_rows.iter().map(|&r| word(r)).collect();
    let p1 = EmbeddingMatrix::new(vocab.clone(), first, "t1").expect("unique words");
    let p2 = EmbeddingMatrix::new(vocab, second, "t2").expect("unique words");
    let gold = GoldRatings::from_pairs(targets.iter().cloned().zip(gold)).expect("at least two targets");
    ScdDataset::new(p1, p2, TargetList::new(targets).expect("non-empty"), gold).expect("consistent synthetic data")
}

/// Paths written by [`write_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub period1: PathBuf,
    pub period2: PathBuf,
    pub targets: PathBuf,
    pub gold: PathBuf,
}

/// Save both periods (word2vec text), the target list and `word<TAB>score` gold ratings.
pub fn write_dataset(d: &ScdDataset, dir: &Path) -> std::io::Result<DatasetFiles> {
    fs::create_dir_all(dir)?;
    let files = DatasetFiles {
        period1: dir.join("period1.txt"),
        period2: dir.join("period2.txt"),
        targets: dir.join("targets.txt"),
        gold: dir.join("gold.tsv"),
    };
    let to_io = |e: crate::corpus_io::CorpusError| std::io::Error::other(e.to_string());
    save_embeddings(&d.period1, &files.period1, EmbeddingFormat::Word2VecText).map_err(to_io)?;
    save_embeddings(&d.period2, &files.period2, EmbeddingFormat::Word2VecText).map_err(to_io)?;
    fs::write(&files.targets, d.targets.words().iter().map(|w| format!("{w}\n")).collect::<String>())?;
    fs::write(&files.gold, d.gold.iter().map(|(w, g)| format!("{w}\t{g}\n")).collect::<String>())?;
    Ok(files)
}
