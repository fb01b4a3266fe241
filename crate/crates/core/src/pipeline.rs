//! End-to-end runs: load, align, joint ICA, importance, tour, merge, score,
//! evaluate. A [`Session`] caches the expensive stages so sweeps reuse them.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::axis_tour::{
    change_weight_matrix, combine_weights, meaning_weight_matrix, solve_tour, CentroidSpace, MeaningMode,
    TourConfig, TourOrder, WeightMatrix,
};
use crate::corpus_io::{self, EmbeddingFormat, EmbeddingMatrix};
use crate::decomposition::{pca_whiten, FastIcaOptions, IcaModel, IcaParams};
use crate::linalg;
use crate::merge::{apply_merge, merge_weights, partition, reorder_columns, MergeMap};
use crate::par;
use crate::scd_eval::{self, axis_importance, ImportanceVector, PairedSpace, ScdDataset, SpaceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Raw,
    Pca,
    Ica,
    Scdtour,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "raw" => Ok(Self::Raw),
            "pca" => Ok(Self::Pca),
            "ica" => Ok(Self::Ica),
            "scdtour" => Ok(Self::Scdtour),
            other => Err(format!("unknown method {other:?} (expected raw|pca|ica|scdtour)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Raw => "raw",
            Self::Pca => "pca",
            Self::Ica => "ica",
            Self::Scdtour => "scdtour",
        })
    }
}

/// Target dimensionality: a count or every available axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum KChoice {
    #[default]
    Full,
    Dims(usize),
}

impl KChoice {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            Self::Full => d,
            Self::Dims(k) => k,
        }
    }
}

impl FromStr for KChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "full" {
            return Ok(Self::Full);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("k must be a positive integer or \"full\", got {s:?}")),
            Ok(k) => Ok(Self::Dims(k)),
        }
    }
}

impl fmt::Display for KChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full => f.write_str("full"),
            Self::Dims(k) => write!(f, "{k}"),
        }
    }
}

impl Serialize for KChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Full => s.serialize_str("full"),
            Self::Dims(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for KChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(k) => format!("{k}").parse().map_err(serde::de::Error::custom),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub period1: PathBuf,
    pub period2: PathBuf,
    pub targets: PathBuf,
    pub gold: PathBuf,
    pub out: Option<PathBuf>,
    pub format: EmbeddingFormat,
    pub method: Method,
    pub k: KChoice,
    pub lambda: f64,
    pub alpha: f64,
    pub top_n: usize,
    pub seed: u64,
    pub restarts: usize,
    pub meaning_mode: MeaningMode,
    pub centroid_space: CentroidSpace,
    pub tol: f64,
    pub max_iter: usize,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let tour = TourConfig::default();
        let ica = FastIcaOptions::default();
        Self {
            period1: PathBuf::new(),
            period2: PathBuf::new(),
            targets: PathBuf::new(),
            gold: PathBuf::new(),
            out: None,
            format: EmbeddingFormat::Auto,
            method: Method::Scdtour,
            k: KChoice::Full,
            lambda: tour.lambda,
            alpha: 1.0,
            top_n: tour.top_n,
            seed: tour.seed,
            restarts: tour.restarts,
            meaning_mode: tour.meaning_mode,
            centroid_space: tour.centroid_space,
            tol: ica.tol,
            max_iter: ica.max_iter,
            threads: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        for (name, p) in [("period1", &self.period1), ("period2", &self.period2), ("targets", &self.targets), ("gold", &self.gold)] {
            if p.as_os_str().is_empty() {
                return bad(format!("missing path for {name}"));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if self.top_n == 0 || self.restarts == 0 || self.max_iter == 0 {
            return bad("top_n, restarts and max_iter must be at least 1".into());
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.method == Method::Raw && self.k != KChoice::Full {
            return bad("method raw only supports k = full".into());
        }
        Ok(())
    }

    pub fn tour_config(&self) -> TourConfig {
        TourConfig {
            lambda: self.lambda,
            top_n: self.top_n,
            seed: self.seed,
            restarts: self.restarts,
            meaning_mode: self.meaning_mode,
            centroid_space: self.centroid_space,
        }
    }

    pub fn ica_options(&self) -> FastIcaOptions {
        FastIcaOptions { seed: self.seed, tol: self.tol, max_iter: self.max_iter, accept_partial: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Align,
    Decompose,
    Importance,
    Weights,
    Tour,
    Merge,
    Score,
    Evaluate,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl PipelineError {
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_))
    }
}

trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: std::error::Error + Send + Sync + 'static> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::Stage { stage, source: Box::new(e) })
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigests {
    pub period1: String,
    pub period2: String,
    pub targets: String,
    pub gold: String,
}

/// Read both periods, intersect their vocabularies and attach targets and gold.
pub fn load_dataset(cfg: &PipelineConfig) -> Result<(ScdDataset, InputDigests)> {
    let p1 = corpus_io::load_embeddings(&cfg.period1, cfg.format).stage(Stage::Load)?;
    let p2 = corpus_io::load_embeddings(&cfg.period2, cfg.format).stage(Stage::Load)?;
    let targets = corpus_io::load_targets(&cfg.targets).stage(Stage::Load)?;
    let gold = corpus_io::load_gold_ratings(&cfg.gold).stage(Stage::Load)?;
    let (p1, p2) = corpus_io::intersect_vocab(&p1, &p2).stage(Stage::Load)?;
    let digests = InputDigests {
        period1: sha256_file(&cfg.period1).stage(Stage::Load)?,
        period2: sha256_file(&cfg.period2).stage(Stage::Load)?,
        targets: sha256_file(&cfg.targets).stage(Stage::Load)?,
        gold: sha256_file(&cfg.gold).stage(Stage::Load)?,
    };
    Ok((ScdDataset::new(p1, p2, targets, gold).stage(Stage::Load)?, digests))
}

/// Jointly fitted ICA over both periods, split back by period.
#[derive(Debug, Clone)]
pub struct JointIca {
    pub model: IcaModel,
    pub first: DMatrix<f64>,
    pub second: DMatrix<f64>,
}

impl JointIca {
    fn split(model: IcaModel, n: usize) -> Self {
        let first = model.sources.rows(0, n).into_owned();
        let second = model.sources.rows(n, n).into_owned();
        Self { model, first, second }
    }

    pub fn space(&self) -> PairedSpace<'_> {
        PairedSpace { kind: SpaceKind::Ica, first: &self.first, second: &self.second }
    }
}

/// On-disk ICA cache entry: the model plus a key over everything it depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaCacheEntry {
    pub key: String,
    pub params: IcaParams,
}

pub const ICA_MODEL_FILE: &str = "ica_model.json";

/// Output of one (method, k, λ) evaluation.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub method: Method,
    pub k: usize,
    pub lambda: Option<f64>,
    pub first: DMatrix<f64>,
    pub second: DMatrix<f64>,
    pub scores: BTreeMap<String, f64>,
    pub spearman: f64,
    pub tour: Option<TourOrder>,
    pub merge: Option<MergeMap>,
}

impl CellOutput {
    pub fn space(&self) -> PairedSpace<'_> {
        let kind = match self.method {
            Method::Raw => SpaceKind::Raw,
            Method::Pca => SpaceKind::Pca,
            Method::Ica => SpaceKind::Ica,
            Method::Scdtour => SpaceKind::Merged,
        };
        PairedSpace { kind, first: &self.first, second: &self.second }
    }
}

/// Loaded inputs plus lazily computed, reusable stages.
pub struct Session {
    pub config: PipelineConfig,
    pub dataset: ScdDataset,
    pub digests: InputDigests,
    /// Period 2 after Procrustes alignment onto period 1.
    pub aligned: DMatrix<f64>,
    pub procrustes: DMatrix<f64>,
    ica: Option<JointIca>,
    importance: Option<ImportanceVector>,
    meaning: Option<WeightMatrix>,
    pca: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl Session {
    pub fn open(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let (dataset, digests) = load_dataset(&config)?;
        Self::from_dataset(config, dataset, digests)
    }

    /// Start from in-memory data; `config` paths are only recorded.
    pub fn from_dataset(config: PipelineConfig, dataset: ScdDataset, digests: InputDigests) -> Result<Self> {
        let (procrustes, aligned) =
            scd_eval::procrustes_align(dataset.period1.matrix(), dataset.period2.matrix()).stage(Stage::Align)?;
        Ok(Self { config, dataset, digests, aligned, procrustes, ica: None, importance: None, meaning: None, pca: None })
    }

    pub fn dim(&self) -> usize {
        self.dataset.period1.dim()
    }

    fn ica_key(&self) -> String {
        let o = self.config.ica_options();
        let mut h = Sha256::new();
        for part in [&self.digests.period1, &self.digests.period2] {
            h.update(part.as_bytes());
        }
        h.update(format!("{:?}|{}|{}|{}|{}", self.config.format, o.seed, o.tol, o.max_iter, self.dim()).as_bytes());
        hex::encode(h.finalize())
    }

    fn stacked(&self) -> DMatrix<f64> {
        linalg::vstack(self.dataset.period1.matrix(), &self.aligned)
    }

    /// Fit (or load from the output directory's cache) the full-dimensional joint ICA.
    pub fn ensure_ica(&mut self) -> Result<&JointIca> {
        if self.ica.is_none() {
            let n = self.dataset.period1.len();
            let x = self.stacked();
            let key = self.ica_key();
            let cache_path = self.config.out.as_ref().map(|d| d.join(ICA_MODEL_FILE));
            let cached = cache_path
                .as_ref()
                .filter(|p| p.exists())
                .and_then(|p| fs::read(p).ok())
                .and_then(|b| serde_json::from_slice::<IcaCacheEntry>(&b).ok())
                .filter(|e| e.key == key);
            let model = match cached {
                Some(entry) => {
                    log::info!("reusing cached ICA model");
                    IcaModel::from_params(&entry.params, &x).stage(Stage::Decompose)?
                }
                None => {
                    log::info!("fitting joint ICA on {} x {}", x.nrows(), x.ncols());
                    let model = IcaModel::fit(&x, self.dim(), &self.config.ica_options()).stage(Stage::Decompose)?;
                    if let Some(p) = cache_path {
                        let entry = IcaCacheEntry { key, params: model.params() };
                        write_json(&p, &entry)?;
                    }
                    model
                }
            };
            self.ica = Some(JointIca::split(model, n));
        }
        Ok(self.ica.as_ref().expect("just set"))
    }

    pub fn ensure_importance(&mut self) -> Result<&ImportanceVector> {
        if self.importance.is_none() {
            self.ensure_ica()?;
            let ica = self.ica.as_ref().expect("ensured");
            let imp = axis_importance(&self.dataset, &ica.space()).stage(Stage::Importance)?;
            self.importance = Some(imp);
        }
        Ok(self.importance.as_ref().expect("just set"))
    }

    pub fn ensure_meaning(&mut self) -> Result<&WeightMatrix> {
        if self.meaning.is_none() {
            self.ensure_ica()?;
            let ica = self.ica.as_ref().expect("ensured");
            let cfg = &self.config;
            let w = match cfg.centroid_space {
                CentroidSpace::Ica => meaning_weight_matrix(&ica.model.sources, &ica.model.sources, cfg.top_n, cfg.meaning_mode),
                CentroidSpace::Original => {
                    meaning_weight_matrix(&ica.model.sources, &self.stacked(), cfg.top_n, cfg.meaning_mode)
                }
            }
            .stage(Stage::Weights)?;
            self.meaning = Some(w);
        }
        Ok(self.meaning.as_ref().expect("just set"))
    }

    fn ensure_pca(&mut self) -> Result<()> {
        if self.pca.is_none() {
            let n = self.dataset.period1.len();
            let x = self.stacked();
            let (_, model) = pca_whiten(&x, self.dim()).stage(Stage::Decompose)?;
            let p = model.project(&x).stage(Stage::Decompose)?;
            self.pca = Some((p.rows(0, n).into_owned(), p.rows(n, n).into_owned()));
        }
        Ok(())
    }

    /// Compute every cached stage a (method, λ) cell needs.
    pub fn prepare(&mut self, method: Method, lambda: f64) -> Result<()> {
        match method {
            Method::Raw => {}
            Method::Pca => self.ensure_pca()?,
            Method::Ica => {
                self.ensure_ica()?;
            }
            Method::Scdtour => {
                self.ensure_meaning()?;
                if lambda > 0.0 {
                    self.ensure_importance()?;
                }
            }
        }
        Ok(())
    }

    pub fn ica(&self) -> Option<&JointIca> {
        self.ica.as_ref()
    }

    pub fn importance(&self) -> Option<&ImportanceVector> {
        self.importance.as_ref()
    }

    fn not_prepared(stage: Stage) -> PipelineError {
        PipelineError::Stage { stage, source: "stage inputs were not prepared".into() }
    }

    /// Solve the axis tour for `lambda` from cached weights.
    pub fn tour(&self, lambda: f64) -> Result<TourOrder> {
        let wm = self.meaning.as_ref().ok_or_else(|| Self::not_prepared(Stage::Weights))?;
        let wc = if lambda > 0.0 {
            let imp = self.importance.as_ref().ok_or_else(|| Self::not_prepared(Stage::Importance))?;
            change_weight_matrix(&imp.values).stage(Stage::Weights)?
        } else {
            WeightMatrix::from_fn(wm.size(), |_, _| 0.0).stage(Stage::Weights)?
        };
        let w = combine_weights(&wc, wm, lambda).stage(Stage::Weights)?;
        Ok(solve_tour(&w, self.config.seed, self.config.restarts))
    }

    /// Evaluate one cell using only cached stages.
    pub fn run_cell(&self, method: Method, k: KChoice, lambda: f64) -> Result<CellOutput> {
        let d = self.dim();
        let kk = k.resolve(d);
        if kk == 0 || kk > d {
            return Err(PipelineError::Config(format!("k = {kk} is outside 1..={d}")));
        }
        if method == Method::Raw && kk != d {
            return Err(PipelineError::Config("method raw only supports k = full".into()));
        }
        let mut tour = None;
        let mut merge = None;
        let (first, second) = match method {
            Method::Raw => (self.dataset.period1.matrix().clone(), self.aligned.clone()),
            Method::Pca => {
                let (a, b) = self.pca.as_ref().ok_or_else(|| Self::not_prepared(Stage::Decompose))?;
                (a.columns(0, kk).into_owned(), b.columns(0, kk).into_owned())
            }
            Method::Ica => {
                let ica = self.ica.as_ref().ok_or_else(|| Self::not_prepared(Stage::Decompose))?;
                let order = &ica.model.skewness_order()[..kk];
                (reorder_columns(&ica.first, order), reorder_columns(&ica.second, order))
            }
            Method::Scdtour => {
                let ica = self.ica.as_ref().ok_or_else(|| Self::not_prepared(Stage::Decompose))?;
                let t = self.tour(lambda)?;
                let gamma: Vec<f64> = t.linear.iter().map(|&a| ica.model.skewness[a]).collect();
                let intervals = partition(d, kk).stage(Stage::Merge)?;
                let map = merge_weights(&gamma, &intervals, self.config.alpha).stage(Stage::Merge)?;
                let a = apply_merge(&reorder_columns(&ica.first, &t.linear), &map).stage(Stage::Merge)?;
                let b = apply_merge(&reorder_columns(&ica.second, &t.linear), &map).stage(Stage::Merge)?;
                tour = Some(t);
                merge = Some(map);
                (a, b)
            }
        };
        let space = PairedSpace { kind: SpaceKind::Raw, first: &first, second: &second };
        let scores = scd_eval::change_scores(&self.dataset, &space).stage(Stage::Score)?;
        let spearman = scd_eval::evaluate_ranking(&self.dataset, &space).stage(Stage::Evaluate)?;
        let lambda = (method == Method::Scdtour).then_some(lambda);
        Ok(CellOutput { method, k: kk, lambda, first, second, scores, spearman, tour, merge })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaSummary {
    pub axes: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Everything needed to reproduce a run; contains no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: PipelineConfig,
    pub inputs: InputDigests,
    pub shared_vocab: usize,
    pub dim: usize,
    pub targets: usize,
    pub rated_targets: usize,
    pub k: usize,
    pub ica: Option<IcaSummary>,
    pub importance_base_score: Option<f64>,
    pub tour_cost: Option<f64>,
    pub spearman: f64,
    pub artifacts: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).stage(Stage::Write)?;
    bytes.push(b'\n');
    fs::write(path, bytes).stage(Stage::Write)
}

fn write_embeddings(session: &Session, m: &DMatrix<f64>, label: &str, path: &Path) -> Result<()> {
    let emb = EmbeddingMatrix::new(session.dataset.period1.vocab().to_vec(), m.clone(), label).stage(Stage::Write)?;
    corpus_io::save_embeddings(&emb, path, EmbeddingFormat::Word2VecText).stage(Stage::Write)
}

/// Write a cell's artifacts into `dir`, returning the file names.
pub fn write_cell_artifacts(session: &Session, cell: &CellOutput, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir).stage(Stage::Write)?;
    let mut names = Vec::new();
    if session.ica.is_some() && matches!(cell.method, Method::Ica | Method::Scdtour) {
        names.push(ICA_MODEL_FILE.to_string());
    }
    if let Some(imp) = &session.importance {
        write_json(&dir.join("importance.json"), imp)?;
        names.push("importance.json".into());
    }
    if let (Some(t), Some(l)) = (&cell.tour, cell.lambda) {
        write_json(&dir.join("tour.json"), &t.record(l, session.config.seed))?;
        names.push("tour.json".into());
    }
    if let Some(m) = &cell.merge {
        write_json(&dir.join("merge_map.json"), m)?;
        names.push("merge_map.json".into());
    }
    let tag = cell.method.to_string();
    for (m, label) in [(&cell.first, "period1"), (&cell.second, "period2")] {
        let name = format!("{tag}_{label}.txt");
        write_embeddings(session, m, label, &dir.join(&name))?;
        names.push(name);
    }
    let file = fs::File::create(dir.join("change_scores.tsv")).stage(Stage::Write)?;
    scd_eval::write_scores(&cell.scores, &mut BufWriter::new(file)).stage(Stage::Write)?;
    names.push("change_scores.tsv".into());
    names.sort();
    Ok(names)
}

pub fn manifest_for(session: &Session, cell: &CellOutput, artifacts: Vec<String>) -> Result<Manifest> {
    Ok(Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: session.config.clone(),
        inputs: session.digests.clone(),
        shared_vocab: session.dataset.period1.len(),
        dim: session.dim(),
        targets: session.dataset.targets.len(),
        rated_targets: session.dataset.rated_targets().stage(Stage::Evaluate)?.len(),
        k: cell.k,
        ica: session
            .ica
            .as_ref()
            .filter(|_| matches!(cell.method, Method::Ica | Method::Scdtour))
            .map(|j| IcaSummary { axes: j.model.axis_count(), iterations: j.model.iterations, converged: j.model.converged }),
        importance_base_score: session.importance.as_ref().map(|i| i.base_score),
        tour_cost: cell.tour.as_ref().map(|t| t.cycle_cost),
        spearman: cell.spearman,
        artifacts,
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Run the configured method end to end, writing artifacts when `out` is set.
pub fn run_pipeline(config: PipelineConfig) -> Result<(Manifest, CellOutput)> {
    let mut session = Session::open(config)?;
    run_session(&mut session)
}

pub fn run_session(session: &mut Session) -> Result<(Manifest, CellOutput)> {
    let cfg = session.config.clone();
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out).stage(Stage::Write)?;
    }
    session.prepare(cfg.method, cfg.lambda)?;
    let cell = session.run_cell(cfg.method, cfg.k, cfg.lambda)?;
    let artifacts = match &cfg.out {
        Some(out) => {
            let mut names = write_cell_artifacts(session, &cell, out)?;
            names.push(MANIFEST_FILE.to_string());
            names.sort();
            names
        }
        None => Vec::new(),
    };
    let manifest = manifest_for(session, &cell, artifacts)?;
    if let Some(out) = &cfg.out {
        write_json(&out.join(MANIFEST_FILE), &manifest)?;
    }
    Ok((manifest, cell))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub k: KChoice,
    pub lambda: Option<f64>,
    pub spearman: Option<f64>,
    pub error: Option<String>,
}

/// Cartesian sweep; λ only varies for SCDTour. Failed cells are recorded and skipped.
pub fn run_sweep(session: &mut Session, methods: &[Method], ks: &[KChoice], lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    let mut cells: Vec<(Method, KChoice, f64)> = Vec::new();
    for &m in methods {
        let ls: Vec<f64> = if m == Method::Scdtour { lambdas.to_vec() } else { vec![session.config.lambda] };
        for &k in ks {
            for &l in &ls {
                cells.push((m, k, l));
            }
        }
    }
    let mut prep_errors: BTreeMap<(Method, u64), String> = BTreeMap::new();
    for &(m, _, l) in &cells {
        if let Err(e) = session.prepare(m, l) {
            prep_errors.insert((m, l.to_bits()), e.to_string());
        }
    }
    let session = &*session;
    Ok(par::map_slice(&cells, |&(method, k, l)| {
        let lambda = (method == Method::Scdtour).then_some(l);
        let result = match prep_errors.get(&(method, l.to_bits())) {
            Some(e) => Err(e.clone()),
            None => session.run_cell(method, k, l).map(|c| c.spearman).map_err(|e| e.to_string()),
        };
        match result {
            Ok(s) => SweepRow { method, k, lambda, spearman: Some(s), error: None },
            Err(e) => {
                log::warn!("sweep cell {method} k={k} failed: {e}");
                SweepRow { method, k, lambda, spearman: None, error: Some(e) }
            }
        }
    }))
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method\tk\tlambda\tspearman\terror\n");
    for r in rows {
        let lambda = r.lambda.map(|l| l.to_string()).unwrap_or_else(|| "-".into());
        let rho = r.spearman.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        let err = r.error.as_deref().unwrap_or("-").replace(['\t', '\n'], " ");
        out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", r.method, r.k, lambda, rho, err));
    }
    out
}

/// Line plot of Spearman against k, one series per method and λ.
pub fn sweep_svg(rows: &[SweepRow], dim: usize) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
    let mut series: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        if let Some(s) = r.spearman {
            let name = match r.lambda {
                Some(l) => format!("{} (lambda={l})", r.method),
                None => r.method.to_string(),
            };
            series.entry(name).or_default().push((r.k.resolve(dim), s));
        }
    }
    let xs: Vec<usize> = series.values().flatten().map(|p| p.0).collect();
    let (xmin, xmax) = (xs.iter().min().copied().unwrap_or(1) as f64, xs.iter().max().copied().unwrap_or(1) as f64);
    let ys: Vec<f64> = series.values().flatten().map(|p| p.1).collect();
    let ymin = ys.iter().copied().fold(0.0f64, f64::min).min(0.0);
    let ymax = ys.iter().copied().fold(0.0f64, f64::max).max(1.0);
    let sx = |x: f64| if xmax > xmin { PAD + (x - xmin) / (xmax - xmin) * (W - 2.0 * PAD) } else { W / 2.0 };
    let sy = |y: f64| H - PAD - (y - ymin) / (ymax - ymin) * (H - 2.0 * PAD);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg.push_str(&format!(
        "<line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = H - PAD,
        r = W - PAD
    ));
    svg.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">k</text>\n", W / 2.0, H - 10.0));
    svg.push_str(&format!("<text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">Spearman</text>\n", H / 2.0, H / 2.0));
    let mut ticks: Vec<usize> = xs.clone();
    ticks.sort_unstable();
    ticks.dedup();
    for t in ticks {
        svg.push_str(&format!("<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{t}</text>\n", sx(t as f64), H - PAD + 16.0));
    }
    for y in [ymin, (ymin + ymax) / 2.0, ymax] {
        svg.push_str(&format!("<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{y:.2}</text>\n", PAD - 6.0, sy(y) + 4.0));
    }
    for (i, (name, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by_key(|p| p.0);
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.1},{:.1}", sx(*x as f64), sy(*y))).collect();
        svg.push_str(&format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n", path.join(" ")));
        for (x, y) in &pts {
            svg.push_str(&format!("<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n", sx(*x as f64), sy(*y)));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>\n",
            W - PAD - 150.0,
            PAD + 14.0 * i as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
