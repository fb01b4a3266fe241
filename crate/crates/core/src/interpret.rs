//! Axis interpretability artifacts: top-word listings, per-target reports,
//! word intruder test items and binary change-detection prompts.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis_tour::top_indices;
use crate::decomposition::skewness;
use crate::par;

pub const WIT_TEMPLATE: &str = include_str!("../templates/wit.txt");
pub const BINARY_TEMPLATE: &str = include_str!("../templates/scd_binary.txt");

/// Top words an intruder test shows from the host axis.
pub const WIT_MEMBERS: usize = 4;
/// Items generated per axis.
pub const WIT_RUNS: usize = 5;
/// Default set size for binary prompts.
pub const BINARY_SET_SIZE: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum InterpretError {
    #[error("axis {axis} out of range for {count} axes")]
    BadAxis { axis: usize, count: usize },
    #[error("count {got} must be in 1..={max}")]
    BadCount { got: usize, max: usize },
    #[error("word {0:?} is not in the vocabulary")]
    MissingWord(String),
    #[error("no valid intruder for axis {0}")]
    NoValidIntruder(usize),
    #[error("need at least 2 axes, got {0}")]
    TooFewAxes(usize),
    #[error("matrix has {rows} rows but vocabulary has {vocab} words")]
    ShapeMismatch { rows: usize, vocab: usize },
}

pub type Result<T> = std::result::Result<T, InterpretError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    pub axis: usize,
    pub top_words: Vec<(String, f64)>,
    pub skewness: f64,
}

impl AxisReport {
    pub fn words(&self) -> Vec<&str> {
        self.top_words.iter().map(|(w, _)| w.as_str()).collect()
    }
}

fn check_shape(s: &DMatrix<f64>, vocab: &[String]) -> Result<()> {
    if s.nrows() != vocab.len() {
        return Err(InterpretError::ShapeMismatch { rows: s.nrows(), vocab: vocab.len() });
    }
    Ok(())
}

fn column(s: &DMatrix<f64>, axis: usize) -> Vec<f64> {
    s.column(axis).iter().copied().collect()
}

/// The `m` highest-valued words on `axis`, descending, ties by vocab index.
pub fn top_words(s: &DMatrix<f64>, vocab: &[String], axis: usize, m: usize) -> Result<AxisReport> {
    check_shape(s, vocab)?;
    if axis >= s.ncols() {
        return Err(InterpretError::BadAxis { axis, count: s.ncols() });
    }
    if m == 0 || m > vocab.len() {
        return Err(InterpretError::BadCount { got: m, max: vocab.len() });
    }
    let col = column(s, axis);
    let top_words = top_indices(&col, m).into_iter().map(|r| (vocab[r].clone(), col[r])).collect();
    // a constant column has no defined skewness
    let skewness = skewness(&col).unwrap_or(0.0);
    Ok(AxisReport { axis, top_words, skewness })
}

/// Reports for every axis.
pub fn axis_reports(s: &DMatrix<f64>, vocab: &[String], m: usize) -> Result<Vec<AxisReport>> {
    par::map_range(s.ncols(), |a| top_words(s, vocab, a, m)).into_iter().collect()
}

fn row_index(vocab: &[String], word: &str) -> Result<usize> {
    vocab.iter().position(|w| w == word).ok_or_else(|| InterpretError::MissingWord(word.to_string()))
}

/// Argmax over the word's row; ties to the lowest axis.
pub fn most_activated_axis(s: &DMatrix<f64>, vocab: &[String], word: &str) -> Result<usize> {
    check_shape(s, vocab)?;
    let r = row_index(vocab, word)?;
    let mut best = 0;
    for a in 1..s.ncols() {
        if s[(r, a)] > s[(r, best)] {
            best = a;
        }
    }
    Ok(best)
}

/// Most-activated axis of a target in each period with that axis's top words there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub word: String,
    pub axis1: usize,
    pub top1: Vec<String>,
    pub axis2: usize,
    pub top2: Vec<String>,
}

pub fn target_reports(
    s1: &DMatrix<f64>,
    s2: &DMatrix<f64>,
    vocab: &[String],
    targets: &[String],
    m: usize,
) -> Result<Vec<TargetReport>> {
    let side = |s: &DMatrix<f64>, w: &str| -> Result<(usize, Vec<String>)> {
        let axis = most_activated_axis(s, vocab, w)?;
        let words = top_words(s, vocab, axis, m)?.top_words.into_iter().map(|(w, _)| w).collect();
        Ok((axis, words))
    };
    targets
        .iter()
        .map(|w| {
            let (axis1, top1) = side(s1, w)?;
            let (axis2, top2) = side(s2, w)?;
            Ok(TargetReport { word: w.clone(), axis1, top1, axis2, top2 })
        })
        .collect()
}

/// Markdown table: axis index and its top words in each period.
pub fn axis_table_markdown(period1: &[AxisReport], period2: &[AxisReport], m: usize) -> String {
    let mut out = String::from("| axis | period 1 | period 2 |\n|---:|---|---|\n");
    for (a, b) in period1.iter().zip(period2) {
        let join = |r: &AxisReport| r.words().into_iter().take(m).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "| {} | {} | {} |", a.axis, join(a), join(b));
    }
    out
}

/// Markdown table: per target, its most-activated axis and top words in each period.
pub fn target_table_markdown(reports: &[TargetReport]) -> String {
    let mut out = String::from("| word | axis (1) | top words (1) | axis (2) | top words (2) |\n|---|---:|---|---:|---|\n");
    for r in reports {
        let _ = writeln!(out, "| {} | {} | {} | {} | {} |", r.word, r.axis1, r.top1.join(", "), r.axis2, r.top2.join(", "));
    }
    out
}

pub fn wit_prompt(words: &[String]) -> String {
    WIT_TEMPLATE.replace("[WORDS]", &words.join(", "))
}

pub fn binary_prompt(set1: &[String], set2: &[String]) -> String {
    BINARY_TEMPLATE.replace("[SET1]", &set1.join(", ")).replace("[SET2]", &set2.join(", "))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitItem {
    pub axis: usize,
    /// Host axis top words in the order shown in the prompt.
    pub members: Vec<String>,
    pub intruder: String,
    pub intruder_axis: usize,
    pub run: usize,
    pub prompt: String,
}

/// `runs` items per axis: the axis's top-4 words plus one intruder drawn
/// uniformly from the other axes' top-`top_n` lists, excluding this axis's
/// own top-`top_n`. Axis `a` run `r` draws from ChaCha stream `r` of seed `seed ^ a`.
pub fn generate_wit_items(s: &DMatrix<f64>, vocab: &[String], top_n: usize, seed: u64, runs: usize) -> Result<Vec<WitItem>> {
    check_shape(s, vocab)?;
    let axes = s.ncols();
    if axes < 2 {
        return Err(InterpretError::TooFewAxes(axes));
    }
    if top_n < WIT_MEMBERS || top_n > vocab.len() {
        return Err(InterpretError::BadCount { got: top_n, max: vocab.len() });
    }
    let tops: Vec<Vec<usize>> = par::map_range(axes, |a| top_indices(&column(s, a), top_n));
    let per_axis = par::map_range(axes, |axis| -> Result<Vec<WitItem>> {
        let own: HashSet<usize> = tops[axis].iter().copied().collect();
        let pool: Vec<(usize, usize)> = (0..axes)
            .filter(|&b| b != axis)
            .flat_map(|b| tops[b].iter().filter(|r| !own.contains(r)).map(move |&r| (b, r)))
            .collect();
        if pool.is_empty() {
            return Err(InterpretError::NoValidIntruder(axis));
        }
        let members: Vec<usize> = tops[axis][..WIT_MEMBERS].to_vec();
        let mut items = Vec::with_capacity(runs);
        for run in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ axis as u64);
            rng.set_stream(run as u64);
            let (intruder_axis, intruder) = pool[rng.random_range(0..pool.len())];
            let mut shown: Vec<usize> = members.iter().copied().chain([intruder]).collect();
            shown.shuffle(&mut rng);
            let words: Vec<String> = shown.iter().map(|&r| vocab[r].clone()).collect();
            items.push(WitItem {
                axis,
                members: shown.iter().filter(|&&r| r != intruder).map(|&r| vocab[r].clone()).collect(),
                intruder: vocab[intruder].clone(),
                intruder_axis,
                run,
                prompt: wit_prompt(&words),
            });
        }
        Ok(items)
    });
    let mut out = Vec::with_capacity(axes * runs);
    for items in per_axis {
        out.extend(items?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryPrompt {
    pub word: String,
    pub set1: Vec<String>,
    pub set2: Vec<String>,
    pub prompt: String,
}

/// Per target: top-`m` words of its most-activated axis in each period.
pub fn generate_binary_prompts(
    s1: &DMatrix<f64>,
    s2: &DMatrix<f64>,
    vocab: &[String],
    targets: &[String],
    m: usize,
) -> Result<Vec<BinaryPrompt>> {
    Ok(target_reports(s1, s2, vocab, targets, m)?
        .into_iter()
        .map(|r| BinaryPrompt { prompt: binary_prompt(&r.top1, &r.top2), word: r.word, set1: r.top1, set2: r.top2 })
        .collect())
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], out: &mut W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
