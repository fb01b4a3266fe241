//! Text-format embeddings, gold change ratings, target lists and
//! word-similarity pair files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate word {0:?}")]
    DuplicateWord(String),
    #[error("line {0}: value count does not match the embedding dimension")]
    RaggedRow(usize),
    #[error("line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("vocabularies have no word in common")]
    EmptyIntersection,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("non-finite value for word {0:?}")]
    NonFinite(String),
    #[error("row count {rows} does not match vocabulary size {vocab}")]
    RowCount { rows: usize, vocab: usize },
    #[error("need at least 2 gold ratings, found {0}")]
    TooFewRatings(usize),
    #[error("unknown embedding format {0:?}")]
    UnknownFormat(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// On-disk layout of an embedding file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EmbeddingFormat {
    /// Optional `n d` header line, then `word v1 .. vd`.
    #[serde(rename = "word2vec")]
    Word2VecText,
    /// `word v1 .. vd`, no header.
    #[serde(rename = "glove")]
    GloveText,
    /// word2vec-text if the first line is exactly two integers, glove-text otherwise.
    #[default]
    #[serde(rename = "auto")]
    Auto,
}

impl FromStr for EmbeddingFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word2vec" | "word2vec-text" => Ok(Self::Word2VecText),
            "glove" | "glove-text" => Ok(Self::GloveText),
            "auto" => Ok(Self::Auto),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

/// Vocabulary-indexed dense matrix, one row per word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    matrix: DMatrix<f64>,
    period_label: String,
}

impl EmbeddingMatrix {
    pub fn new(vocab: Vec<String>, matrix: DMatrix<f64>, period_label: impl Into<String>) -> Result<Self> {
        if vocab.is_empty() {
            return Err(CorpusError::Empty("vocabulary"));
        }
        if matrix.ncols() == 0 {
            return Err(CorpusError::Empty("embedding dimension"));
        }
        if matrix.nrows() != vocab.len() {
            return Err(CorpusError::RowCount { rows: matrix.nrows(), vocab: vocab.len() });
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, w) in vocab.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(CorpusError::DuplicateWord(w.clone()));
            }
        }
        for (r, w) in vocab.iter().enumerate() {
            if matrix.row(r).iter().any(|v| !v.is_finite()) {
                return Err(CorpusError::NonFinite(w.clone()));
            }
        }
        Ok(Self { vocab, index, matrix, period_label: period_label.into() })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn period_label(&self) -> &str {
        &self.period_label
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.matrix.row(i).iter().copied().collect()
    }

    /// Same vocabulary and label, different values (e.g. after a transform).
    pub fn with_matrix(&self, matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(self.vocab.clone(), matrix, self.period_label.clone())
    }

    /// Keep the given words, in the given order.
    pub fn select(&self, words: &[String]) -> Result<Self> {
        let rows: Vec<usize> = words
            .iter()
            .map(|w| self.index_of(w).ok_or(CorpusError::EmptyIntersection))
            .collect::<Result<_>>()?;
        let matrix = DMatrix::from_fn(rows.len(), self.dim(), |r, c| self.matrix[(rows[r], c)]);
        Self::new(words.to_vec(), matrix, self.period_label.clone())
    }
}

fn parse_value(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| CorpusError::ParseError { line, msg: format!("not a number: {tok:?}") })?;
    if !v.is_finite() {
        return Err(CorpusError::ParseError { line, msg: format!("non-finite value {tok:?}") });
    }
    Ok(v)
}

fn is_header(line: &str) -> Option<(usize, usize)> {
    let toks: Vec<&str> = line.split_ascii_whitespace().collect();
    match toks.as_slice() {
        [a, b] => Some((a.parse().ok()?, b.parse().ok()?)),
        _ => None,
    }
}

/// Read an embedding file. Rows keep file order.
pub fn load_embeddings(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_embeddings(reader, format, label)
}

pub fn read_embeddings<R: BufRead>(reader: R, format: EmbeddingFormat, label: impl Into<String>) -> Result<EmbeddingMatrix> {
    let mut vocab = Vec::new();
    let mut seen = HashSet::new();
    let mut values: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut header: Option<(usize, usize)> = None;

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && format != EmbeddingFormat::GloveText {
            if let Some(h) = is_header(&line) {
                header = Some(h);
                dim = Some(h.1);
                continue;
            }
        }
        let mut toks = line.split_ascii_whitespace();
        let word = toks.next().expect("non-blank line has a token");
        let start = values.len();
        for tok in toks {
            values.push(parse_value(tok, line_no)?);
        }
        let n_vals = values.len() - start;
        match dim {
            None if n_vals == 0 => return Err(CorpusError::RaggedRow(line_no)),
            None => dim = Some(n_vals),
            Some(d) if d != n_vals => return Err(CorpusError::RaggedRow(line_no)),
            Some(_) => {}
        }
        if !seen.insert(word.to_string()) {
            return Err(CorpusError::DuplicateWord(word.to_string()));
        }
        vocab.push(word.to_string());
    }

    if let Some((n, _)) = header {
        if n != vocab.len() {
            log::warn!("header announces {n} rows but file holds {}", vocab.len());
        }
    }
    let d = dim.ok_or(CorpusError::Empty("embedding file"))?;
    if vocab.is_empty() {
        return Err(CorpusError::Empty("embedding file"));
    }
    let matrix = DMatrix::from_row_slice(vocab.len(), d, &values);
    EmbeddingMatrix::new(vocab, matrix, label)
}

/// Write an embedding file. Values use the shortest round-trip decimal form.
pub fn save_embeddings(emb: &EmbeddingMatrix, path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_embeddings(emb, &mut out, format)?;
    out.flush()?;
    Ok(())
}

pub fn write_embeddings<W: Write>(emb: &EmbeddingMatrix, out: &mut W, format: EmbeddingFormat) -> Result<()> {
    if format == EmbeddingFormat::Word2VecText {
        writeln!(out, "{} {}", emb.len(), emb.dim())?;
    }
    let m = emb.matrix();
    let mut line = String::new();
    for (r, word) in emb.vocab().iter().enumerate() {
        line.clear();
        line.push_str(word);
        for c in 0..m.ncols() {
            line.push(' ');
            line.push_str(&m[(r, c)].to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Human change ratings, keyed by word (lexicographic order).
#[derive(Debug, Clone, PartialEq)]
pub struct GoldRatings {
    entries: BTreeMap<String, f64>,
}

impl GoldRatings {
    pub fn new(entries: BTreeMap<String, f64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(CorpusError::TooFewRatings(entries.len()));
        }
        if let Some((w, _)) = entries.iter().find(|(_, v)| !v.is_finite()) {
            return Err(CorpusError::NonFinite(w.clone()));
        }
        Ok(Self { entries })
    }

    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut entries = BTreeMap::new();
        for (w, v) in pairs {
            let w = w.into();
            if entries.insert(w.clone(), v).is_some() {
                return Err(CorpusError::DuplicateWord(w));
            }
        }
        Self::new(entries)
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn words(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }
}

/// `word<TAB>score` per line; falls back to any whitespace when a line has no tab.
pub fn load_gold_ratings(path: impl AsRef<Path>) -> Result<GoldRatings> {
    read_gold_ratings(BufReader::new(File::open(path)?))
}

pub fn read_gold_ratings<R: BufRead>(reader: R) -> Result<GoldRatings> {
    let mut entries = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).filter(|s| !s.is_empty()).collect()
        } else {
            line.split_ascii_whitespace().collect()
        };
        let [word, score] = fields.as_slice() else {
            return Err(CorpusError::ParseError { line: line_no, msg: "expected `word<TAB>score`".into() });
        };
        let score = parse_value(score, line_no)?;
        if entries.insert(word.to_string(), score).is_some() {
            return Err(CorpusError::DuplicateWord(word.to_string()));
        }
    }
    GoldRatings::new(entries)
}

/// Ordered, duplicate-free list of target words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetList {
    words: Vec<String>,
}

impl TargetList {
    pub fn new(words: Vec<String>) -> Result<Self> {
        if words.is_empty() {
            return Err(CorpusError::Empty("target list"));
        }
        let mut seen = HashSet::new();
        for w in &words {
            if !seen.insert(w) {
                return Err(CorpusError::DuplicateWord(w.clone()));
            }
        }
        Ok(Self { words })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn load_targets(path: impl AsRef<Path>) -> Result<TargetList> {
    read_targets(BufReader::new(File::open(path)?))
}

pub fn read_targets<R: BufRead>(reader: R) -> Result<TargetList> {
    let mut words = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let w = line.trim();
        if !w.is_empty() {
            words.push(w.to_string());
        }
    }
    TargetList::new(words)
}

/// One row of a word-similarity benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityPair {
    pub first: String,
    pub second: String,
    pub score: f64,
}

/// `word1<TAB>word2<TAB>score` per line (whitespace fallback).
pub fn load_similarity_pairs(path: impl AsRef<Path>) -> Result<Vec<SimilarityPair>> {
    read_similarity_pairs(BufReader::new(File::open(path)?))
}

pub fn read_similarity_pairs<R: BufRead>(reader: R) -> Result<Vec<SimilarityPair>> {
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_ascii_whitespace().collect()
        };
        let [a, b, s] = fields.as_slice() else {
            return Err(CorpusError::ParseError { line: line_no, msg: "expected `word1<TAB>word2<TAB>score`".into() });
        };
        pairs.push(SimilarityPair { first: a.to_string(), second: b.to_string(), score: parse_value(s, line_no)? });
    }
    Ok(pairs)
}

/// Restrict both matrices to their shared vocabulary, sorted lexicographically.
pub fn intersect_vocab(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    if a.dim() != b.dim() {
        return Err(CorpusError::DimMismatch(a.dim(), b.dim()));
    }
    let mut shared: Vec<String> = a.vocab().iter().filter(|w| b.contains(w)).cloned().collect();
    if shared.is_empty() {
        return Err(CorpusError::EmptyIntersection);
    }
    shared.sort();
    Ok((a.select(&shared)?, b.select(&shared)?))
}
