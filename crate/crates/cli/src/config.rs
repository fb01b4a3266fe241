//! Command-line flags merged over an optional TOML file; flags win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::Deserialize;

use scdtour::axis_tour::{CentroidSpace, MeaningMode};
use scdtour::corpus_io::EmbeddingFormat;
use scdtour::pipeline::{KChoice, Method, PipelineConfig};

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with [pipeline] and [sweep] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub period1: Option<PathBuf>,
    #[arg(long, global = true)]
    pub period2: Option<PathBuf>,
    #[arg(long, global = true)]
    pub targets: Option<PathBuf>,
    #[arg(long, global = true)]
    pub gold: Option<PathBuf>,
    /// Output directory; also holds the ICA cache.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// word2vec, glove or auto.
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// raw, pca, ica or scdtour.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Target dimensions or "full".
    #[arg(long, global = true)]
    pub k: Option<String>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub top_n: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    /// distance or literal.
    #[arg(long, global = true)]
    pub meaning_mode: Option<String>,
    /// ica or original.
    #[arg(long, global = true)]
    pub centroid_space: Option<String>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub methods: Option<Vec<Method>>,
    pub ks: Option<Vec<KChoice>>,
    pub lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    pipeline: PipelineConfig,
    sweep: SweepSection,
}

fn parse<T: std::str::FromStr>(flag: &str, v: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow::anyhow!("--{flag}: {e}"))
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

/// Resolve the final configuration. Relative paths in the file are taken
/// relative to the file's directory.
pub fn resolve(args: &RunArgs) -> anyhow::Result<(PipelineConfig, SweepSection)> {
    let FileConfig { pipeline: mut cfg, sweep } = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut file: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let base = path.parent().unwrap_or(Path::new("."));
            let p = &mut file.pipeline;
            for slot in [&mut p.period1, &mut p.period2, &mut p.targets, &mut p.gold] {
                rebase(base, slot);
            }
            if let Some(out) = p.out.as_mut() {
                rebase(base, out);
            }
            file
        }
        None => FileConfig::default(),
    };
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = &args.$field {
                cfg.$field = v.clone();
            }
        };
    }
    take!(period1);
    take!(period2);
    take!(targets);
    take!(gold);
    take!(lambda);
    take!(alpha);
    take!(top_n);
    take!(seed);
    take!(restarts);
    take!(tol);
    take!(max_iter);
    take!(threads);
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(v) = &args.format {
        cfg.format = parse::<EmbeddingFormat>("format", v)?;
    }
    if let Some(v) = &args.method {
        cfg.method = parse::<Method>("method", v)?;
    }
    if let Some(v) = &args.k {
        cfg.k = parse::<KChoice>("k", v)?;
    }
    if let Some(v) = &args.meaning_mode {
        cfg.meaning_mode = parse::<MeaningMode>("meaning-mode", v)?;
    }
    if let Some(v) = &args.centroid_space {
        cfg.centroid_space = match v.as_str() {
            "ica" => CentroidSpace::Ica,
            "original" => CentroidSpace::Original,
            other => bail!("--centroid-space: unknown value {other:?} (expected ica|original)"),
        };
    }
    cfg.validate()?;
    Ok((cfg, sweep))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> RunArgs {
        RunArgs {
            period1: Some("a.txt".into()),
            period2: Some("b.txt".into()),
            targets: Some("t.txt".into()),
            gold: Some("g.tsv".into()),
            ..Default::default()
        }
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[pipeline]\nlambda = 0.5\nk = 8\nperiod1 = \"p1.txt\"\n[sweep]\nks = [\"full\", 4]\n").unwrap();
        let a = RunArgs { config: Some(path), lambda: Some(0.75), period1: None, ..args() };
        let (cfg, sweep) = resolve(&a).unwrap();
        assert_eq!(cfg.lambda, 0.75);
        assert_eq!(cfg.k, KChoice::Dims(8));
        assert_eq!(cfg.period1, dir.path().join("p1.txt"));
        assert_eq!(sweep.ks, Some(vec![KChoice::Full, KChoice::Dims(4)]));
    }

    #[test]
    fn bad_values_are_errors() {
        assert!(resolve(&RunArgs { method: Some("svd".into()), ..args() }).is_err());
        assert!(resolve(&RunArgs { lambda: Some(3.0), ..args() }).is_err());
        assert!(resolve(&RunArgs { period1: None, ..args() }).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[pipeline]\nlamda = 0.5\n").unwrap();
        assert!(resolve(&RunArgs { config: Some(path), ..args() }).is_err());
    }
}
