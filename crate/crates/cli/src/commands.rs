use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use scdtour::corpus_io::{save_embeddings, EmbeddingFormat, EmbeddingMatrix};
use scdtour::interpret;
use scdtour::pipeline::{self, CellOutput, KChoice, Method, PipelineConfig, Session};
use scdtour::scd_eval::write_scores;

use crate::config::SweepSection;
use crate::Command;

/// Misuse that should exit with the config status code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn require_out(cfg: &PipelineConfig, command: &str) -> anyhow::Result<PathBuf> {
    let out = cfg.out.clone().ok_or_else(|| UsageError(format!("{command} needs --out")))?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_matrix(session: &Session, m: &nalgebra::DMatrix<f64>, label: &str, path: &Path) -> anyhow::Result<()> {
    let emb = EmbeddingMatrix::new(session.dataset.period1.vocab().to_vec(), m.clone(), label)?;
    save_embeddings(&emb, path, EmbeddingFormat::Word2VecText)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    interpret::write_jsonl(items, &mut w)?;
    w.flush()?;
    Ok(())
}

/// The configured method's representation of both periods.
fn cell(session: &mut Session, method: Method) -> anyhow::Result<CellOutput> {
    let cfg = session.config.clone();
    session.prepare(method, cfg.lambda)?;
    Ok(session.run_cell(method, cfg.k, cfg.lambda)?)
}

fn parse_list<T: std::str::FromStr>(flag: &str, items: &[String]) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    items
        .iter()
        .map(|s| s.trim().parse::<T>().map_err(|e| UsageError(format!("--{flag}: {e}")).into()))
        .collect()
}

pub fn run(command: &Command, cfg: PipelineConfig, sweep: SweepSection) -> anyhow::Result<()> {
    let mut session = Session::open(cfg.clone())?;
    match command {
        Command::Decompose => {
            let out = require_out(&cfg, "decompose")?;
            let ica = session.ensure_ica()?.clone();
            write_matrix(&session, &ica.first, "period1", &out.join("ica_period1.txt"))?;
            write_matrix(&session, &ica.second, "period2", &out.join("ica_period2.txt"))?;
            println!(
                "{} axes, {} iterations, converged {}",
                ica.model.axis_count(),
                ica.model.iterations,
                ica.model.converged
            );
        }
        Command::Tour => {
            let out = require_out(&cfg, "tour")?;
            session.prepare(Method::Scdtour, cfg.lambda)?;
            let tour = session.tour(cfg.lambda)?;
            if let Some(imp) = session.importance() {
                write_json(&out.join("importance.json"), imp)?;
            }
            write_json(&out.join("tour.json"), &tour.record(cfg.lambda, cfg.seed))?;
            let order: Vec<String> = tour.linear.iter().map(usize::to_string).collect();
            println!("{}", order.join(" "));
        }
        Command::Merge => {
            let out = require_out(&cfg, "merge")?;
            let c = cell(&mut session, Method::Scdtour)?;
            write_json(&out.join("merge_map.json"), c.merge.as_ref().expect("scdtour cells carry a merge map"))?;
            write_matrix(&session, &c.first, "period1", &out.join("merged_period1.txt"))?;
            write_matrix(&session, &c.second, "period2", &out.join("merged_period2.txt"))?;
            println!("merged {} axes into {}", session.dim(), c.k);
        }
        Command::Score => {
            let c = cell(&mut session, cfg.method)?;
            match &cfg.out {
                Some(out) => {
                    fs::create_dir_all(out)?;
                    let f = fs::File::create(out.join("change_scores.tsv"))?;
                    let mut w = BufWriter::new(f);
                    write_scores(&c.scores, &mut w)?;
                    w.flush()?;
                }
                None => write_scores(&c.scores, &mut std::io::stdout().lock())?,
            }
        }
        Command::Eval => {
            let (manifest, _) = pipeline::run_session(&mut session)?;
            println!("spearman\t{}", manifest.spearman);
        }
        Command::Sweep { methods, ks, lambdas } => {
            let out = require_out(&cfg, "sweep")?;
            let methods = match methods {
                Some(m) => parse_list::<Method>("methods", m)?,
                None => sweep.methods.unwrap_or_else(|| vec![cfg.method]),
            };
            let ks = match ks {
                Some(k) => parse_list::<KChoice>("ks", k)?,
                None => sweep.ks.unwrap_or_else(|| vec![cfg.k]),
            };
            let lambdas = lambdas.clone().or(sweep.lambdas).unwrap_or_else(|| vec![cfg.lambda]);
            if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
                return Err(UsageError(format!("--lambdas: {l} is outside [0, 1]")).into());
            }
            let rows = pipeline::run_sweep(&mut session, &methods, &ks, &lambdas)?;
            let tsv = pipeline::sweep_tsv(&rows);
            fs::write(out.join("sweep.tsv"), &tsv)?;
            fs::write(out.join("sweep.svg"), pipeline::sweep_svg(&rows, session.dim()))?;
            print!("{tsv}");
        }
        Command::Report { words } => {
            let out = require_out(&cfg, "report")?;
            let c = cell(&mut session, cfg.method)?;
            let vocab = session.dataset.period1.vocab().to_vec();
            let r1 = interpret::axis_reports(&c.first, &vocab, *words)?;
            let r2 = interpret::axis_reports(&c.second, &vocab, *words)?;
            let targets = session.dataset.targets.words().to_vec();
            let t = interpret::target_reports(&c.first, &c.second, &vocab, &targets, 5)?;
            #[derive(Serialize)]
            struct Axes<'a> {
                period1: &'a [interpret::AxisReport],
                period2: &'a [interpret::AxisReport],
            }
            write_json(&out.join("axes.json"), &Axes { period1: &r1, period2: &r2 })?;
            write_json(&out.join("targets.json"), &t)?;
            fs::write(out.join("axes.md"), interpret::axis_table_markdown(&r1, &r2, 5))?;
            fs::write(out.join("targets.md"), interpret::target_table_markdown(&t))?;
            print!("{}", interpret::target_table_markdown(&t));
        }
        Command::WitGen { period, runs } => {
            let out = require_out(&cfg, "wit-gen")?;
            let c = cell(&mut session, cfg.method)?;
            let s = if *period == 1 { &c.first } else { &c.second };
            let items = interpret::generate_wit_items(s, session.dataset.period1.vocab(), cfg.top_n, cfg.seed, *runs)?;
            write_jsonl(&out.join("wit_items.jsonl"), &items)?;
            println!("{} items", items.len());
        }
        Command::PromptsGen { set_size } => {
            let out = require_out(&cfg, "prompts-gen")?;
            let c = cell(&mut session, cfg.method)?;
            let prompts = interpret::generate_binary_prompts(
                &c.first,
                &c.second,
                session.dataset.period1.vocab(),
                session.dataset.targets.words(),
                *set_size,
            )?;
            write_jsonl(&out.join("binary_prompts.jsonl"), &prompts)?;
            println!("{} prompts", prompts.len());
        }
    }
    Ok(())
}
