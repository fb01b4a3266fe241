//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero when any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use scdtour::axis_tour::{
    change_weight_matrix, combine_weights, held_karp, min_max_normalize, solve_tour, WeightMatrix,
};
use scdtour::corpus_io::{self, EmbeddingFormat, EmbeddingMatrix, GoldRatings, TargetList};
use scdtour::decomposition::{FastIcaOptions, IcaModel};
use scdtour::interpret::{binary_prompt, generate_binary_prompts, generate_wit_items, wit_prompt, WIT_RUNS};
use scdtour::merge::{apply_merge, merge_weights, partition};
use scdtour::pipeline::{InputDigests, KChoice, Method, PipelineConfig, Session};
use scdtour::scd_eval::{
    axis_importance, procrustes_align, similarity_benchmark, spearman, PairedSpace, ScdDataset, SpaceKind,
};
use scdtour::synthetic::{generate, SyntheticConfig};
use scdtour::{linalg, par};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn coefficient_norm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut intervals = 0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=50);
        let gamma: Vec<f64> = (0..m).map(|_| rng.random_range(1e-3..5.0)).collect();
        let k = rng.random_range(1..=m);
        for alpha in [0.5, 1.0, 2.0] {
            let map = merge_weights(&gamma, &partition(m, k).unwrap(), alpha).unwrap();
            for coef in &map.coefficients {
                let s: f64 = coef.iter().map(|f| f * f).sum();
                worst = worst.max((s - 1.0).abs());
                intervals += 1;
            }
        }
    }
    verdict(worst <= 1e-10, format!("{intervals} intervals, max |sum f^2 - 1| = {worst:.2e}"))
}

fn merge_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut mismatched = 0;
    for _ in 0..100 {
        let m = rng.random_range(1..=40);
        let n = rng.random_range(1..=60);
        let s = gaussian(&mut rng, n, m);
        let gamma: Vec<f64> = (0..m).map(|_| rng.random_range(1e-3..5.0)).collect();
        let alpha = [0.5, 1.0, 2.0][rng.random_range(0..3)];
        let map = merge_weights(&gamma, &partition(m, m).unwrap(), alpha).unwrap();
        let out = apply_merge(&s, &map).unwrap();
        if out.iter().zip(s.iter()).any(|(a, b)| a.to_bits() != b.to_bits()) {
            mismatched += 1;
        }
    }
    verdict(mismatched == 0, format!("{mismatched}/100 instances differ bitwise"))
}

fn tsp_gap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut below, mut over, mut exact) = (0, 0, 0);
    let mut worst = 1.0f64;
    for seed in 0..100u64 {
        let vals: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let w = WeightMatrix::from_fn(10, |i, j| vals[i * 10 + j]).unwrap();
        let opt = held_karp(&w).unwrap().cycle_cost;
        let got = solve_tour(&w, seed, 8).cycle_cost;
        let ratio = got / opt;
        worst = worst.max(ratio);
        if got < opt * (1.0 - 1e-12) {
            below += 1;
        }
        if ratio > 1.05 {
            over += 1;
        }
        if (got - opt).abs() <= 1e-12 * opt {
            exact += 1;
        }
    }
    verdict(
        below == 0 && over == 0 && exact >= 80,
        format!("exact {exact}/100, worst ratio {worst:.4}, below optimum {below}, above 1.05x {over}"),
    )
}

fn procrustes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (mut worst_orth, mut worst_res) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let d = rng.random_range(1..=50);
        let n = d + rng.random_range(0..100);
        let x = gaussian(&mut rng, n, d);
        let r = linalg::random_orthogonal(d, &mut rng);
        let y = &x * &r;
        let (w, aligned) = procrustes_align(&x, &y).unwrap();
        worst_orth = worst_orth.max(linalg::orthogonality_defect(&w));
        worst_res = worst_res.max((aligned - &x).norm() / x.norm());
    }
    verdict(
        worst_orth <= 1e-8 && worst_res <= 1e-6,
        format!("max |WtW - I| = {worst_orth:.2e}, max relative residual = {worst_res:.2e}"),
    )
}

/// Mean |corr| under the best source-to-axis assignment.
fn best_assignment_corr(recovered: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            ab += (x - ma) * (y - mb);
            aa += (x - ma) * (x - ma);
            bb += (y - mb) * (y - mb);
        }
        (ab / (aa * bb).sqrt()).abs()
    }
    fn perms(m: usize) -> Vec<Vec<usize>> {
        if m == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(m - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, m - 1);
                out.push(q);
            }
        }
        out
    }
    let m = truth.ncols();
    let cols = |x: &DMatrix<f64>, j: usize| x.column(j).iter().copied().collect::<Vec<_>>();
    let c: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| corr(&cols(recovered, i), &cols(truth, j))).collect()).collect();
    perms(m).iter().map(|p| p.iter().enumerate().map(|(i, &j)| c[i][j]).sum::<f64>() / m as f64).fold(0.0, f64::max)
}

fn fastica_recovery() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for m in [2usize, 3, 4] {
        let good = par::map_range(100, |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * m as u64 + seed as u64);
            let sources = DMatrix::from_fn(10_000, m, |_, _| rng.random_range(-1.0..1.0));
            let mixing = gaussian(&mut rng, m, m);
            let x = &sources * mixing.transpose();
            let opts = FastIcaOptions { seed: seed as u64, ..Default::default() };
            match IcaModel::fit(&x, m, &opts) {
                Ok(model) => best_assignment_corr(&model.sources, &sources) >= 0.95,
                Err(_) => false,
            }
        })
        .into_iter()
        .filter(|&g| g)
        .count();
        ok &= good >= 95;
        details.push(format!("m={m}: {good}/100"));
    }
    verdict(ok, details.join(", "))
}

/// Average ranks by counting, O(n^2).
fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

fn brute_spearman(a: &[f64], b: &[f64]) -> f64 {
    brute_pearson(&brute_ranks(a), &brute_ranks(b))
}

fn spearman_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 1000 {
        let n = rng.random_range(2..=60);
        let tie_heavy = done % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| if tie_heavy { rng.random_range(0..4) as f64 } else { rng.sample(StandardNormal) }).collect()
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
        if constant(&a) || constant(&b) {
            continue;
        }
        worst = worst.max((spearman(&a, &b).unwrap() - brute_spearman(&a, &b)).abs());
        done += 1;
    }
    verdict(worst <= 1e-12, format!("1000 vectors, max deviation {worst:.2e}"))
}

fn importance_dataset() -> (ScdDataset, DMatrix<f64>, DMatrix<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let (targets, axes, signal) = (20, 6, 2);
    let first = gaussian(&mut rng, targets, axes);
    let gold: Vec<f64> = (0..targets).map(|_| rng.random::<f64>()).collect();
    let mut second = first.clone();
    for (i, g) in gold.iter().enumerate() {
        second[(i, signal)] += 3.0 * g;
    }
    let words: Vec<String> = (0..targets).map(|i| format!("t{i:02}")).collect();
    let d = ScdDataset::new(
        EmbeddingMatrix::new(words.clone(), first.clone(), "t1").unwrap(),
        EmbeddingMatrix::new(words.clone(), second.clone(), "t2").unwrap(),
        TargetList::new(words.clone()).unwrap(),
        GoldRatings::from_pairs(words.into_iter().zip(gold)).unwrap(),
    )
    .unwrap();
    (d, first, second, signal)
}

/// Remove the column, recompute every cosine and rank from scratch.
fn oracle_importance(d: &ScdDataset, first: &DMatrix<f64>, second: &DMatrix<f64>) -> Vec<f64> {
    let mut words: Vec<(String, usize, f64)> =
        d.gold.iter().map(|(w, g)| (w.to_string(), d.period1.index_of(w).unwrap(), g)).collect();
    words.sort_by(|a, b| a.0.cmp(&b.0));
    let gold: Vec<f64> = words.iter().map(|w| w.2).collect();
    let score = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let pred: Vec<f64> = words
            .iter()
            .map(|&(_, r, _)| {
                let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
                for c in 0..a.ncols() {
                    ab += a[(r, c)] * b[(r, c)];
                    aa += a[(r, c)] * a[(r, c)];
                    bb += b[(r, c)] * b[(r, c)];
                }
                1.0 - ab / (aa.sqrt() * bb.sqrt())
            })
            .collect();
        brute_spearman(&pred, &gold)
    };
    let base = score(first, second);
    (0..first.ncols())
        .map(|c| base - score(&first.clone().remove_column(c), &second.clone().remove_column(c)))
        .collect()
}

fn importance_oracle() -> Outcome {
    let (d, first, second, signal) = importance_dataset();
    let space = PairedSpace { kind: SpaceKind::Ica, first: &first, second: &second };
    let got = axis_importance(&d, &space).unwrap();
    let want = oracle_importance(&d, &first, &second);
    let exact = got.values == want;
    let max_diff = got.values.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let argmax = (0..got.values.len()).max_by(|&a, &b| got.values[a].abs().total_cmp(&got.values[b].abs())).unwrap();
    verdict(
        exact && argmax == signal,
        format!("exact match {exact} (max diff {max_diff:.1e}), max |Imp| at axis {argmax} (signal axis {signal})"),
    )
}

fn session_for(d: ScdDataset, method: Method, k: KChoice, lambda: f64) -> Session {
    let cfg = PipelineConfig { method, k, lambda, ..Default::default() };
    let digests = InputDigests { period1: String::new(), period2: String::new(), targets: String::new(), gold: String::new() };
    Session::from_dataset(cfg, d, digests).unwrap()
}

fn end_to_end_synthetic() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for seed in 0..3u64 {
        let d = generate(&SyntheticConfig { seed, ..Default::default() });
        let mut s = session_for(d, Method::Scdtour, KChoice::Dims(8), 0.25);
        s.prepare(Method::Ica, 0.25).unwrap();
        s.prepare(Method::Scdtour, 0.25).unwrap();
        let full = s.run_cell(Method::Ica, KChoice::Full, 0.25).unwrap().spearman;
        let merged = s.run_cell(Method::Scdtour, KChoice::Dims(8), 0.25).unwrap().spearman;
        ok &= full >= 0.9 && full - merged <= 0.15;
        details.push(format!("seed {seed}: full {full:.3}, k=8 {merged:.3}"));
    }
    verdict(ok, details.join("; "))
}

fn lambda_endpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let m = rng.random_range(2..=30);
        let imp: Vec<f64> = (0..m).map(|_| rng.random_range(-0.2..0.2)).collect();
        let vals: Vec<f64> = (0..m * m).map(|_| rng.random_range(0.0..2.0)).collect();
        let wc = change_weight_matrix(&imp).unwrap();
        let wm = WeightMatrix::from_fn(m, |i, j| vals[i * m + j]).unwrap();
        let (nc, nm) = (min_max_normalize(&wc), min_max_normalize(&wm));
        let at0 = combine_weights(&wc, &wm, 0.0).unwrap();
        let at1 = combine_weights(&wc, &wm, 1.0).unwrap();
        for (a, b) in at0.values().iter().zip(nm.values()).chain(at1.values().iter().zip(nc.values())) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(worst <= 1e-12, format!("50 instances, max deviation {worst:.2e}"))
}

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn prompt_golden_files() -> Outcome {
    let mut failures = Vec::new();
    let words = |s: &[&str]| s.iter().map(|w| w.to_string()).collect::<Vec<_>>();
    let wit_golden = golden("wit_prompt.txt");
    if wit_prompt(&words(&["apple", "banana", "cherry", "motorcycle", "grape"])) != wit_golden {
        failures.push("wit prompt");
    }
    let bin_golden = golden("binary_prompt.txt");
    let set1 = words(&["surface", "angle", "axis", "curve", "line"]);
    let set2 = words(&["aircraft", "pilot", "jet", "airport", "flight"]);
    if binary_prompt(&set1, &set2) != bin_golden {
        failures.push("binary prompt");
    }

    // generated records: golden text with only the word slots changed
    let vocab: Vec<String> = set1.iter().chain(&set2).cloned().collect();
    let s1 = DMatrix::from_fn(10, 2, |r, c| if r / 5 == c { 5.0 - (r % 5) as f64 } else { 0.0 });
    let s2 = DMatrix::from_fn(10, 2, |r, c| if r / 5 == c { 5.0 - (r % 5) as f64 } else { 0.0 } + if r == 0 && c == 1 { 10.0 } else { 0.0 });
    let recs = generate_binary_prompts(&s1, &s2, &vocab, &words(&["surface"]), 5).unwrap();
    if recs[0].prompt != bin_golden.replace("{aircraft, pilot, jet, airport, flight}", "{surface, aircraft, pilot, jet, airport}") {
        failures.push("generated binary record");
    }
    let items = generate_wit_items(&s1, &vocab, 4, 9, WIT_RUNS).unwrap();
    let wit_slot = "apple, banana, cherry, motorcycle, grape";
    for it in &items {
        let mut shown: Vec<String> = it.prompt.lines().nth(1).unwrap().split(", ").map(str::to_string).collect();
        let expected = wit_golden.replace(wit_slot, &shown.join(", "));
        shown.retain(|w| *w != it.intruder);
        if it.prompt != expected || shown != it.members {
            failures.push("generated wit record");
            break;
        }
    }
    verdict(failures.is_empty(), if failures.is_empty() { "wit and binary outputs byte-match".into() } else { failures.join(", ") })
}

fn glove_similarity() -> Outcome {
    let (Some(glove), Some(pairs)) = (std::env::var_os("SCDTOUR_GLOVE"), std::env::var_os("SCDTOUR_SIMILARITY_PAIRS")) else {
        return Outcome::Skip("set SCDTOUR_GLOVE and SCDTOUR_SIMILARITY_PAIRS to run".into());
    };
    let emb = corpus_io::load_embeddings(&glove, EmbeddingFormat::GloveText).unwrap();
    let pairs = corpus_io::load_similarity_pairs(&pairs).unwrap();
    let (rho, skipped) = similarity_benchmark(&emb, &pairs).unwrap();
    verdict((rho - 0.57).abs() <= 0.05, format!("rho {rho:.3} over {} pairs ({skipped} skipped)", pairs.len() - skipped))
}

fn desk_scale() -> Outcome {
    let d = generate(&SyntheticConfig { vocab: 20_000, dim: 200, targets: 37, seed: 5, ..Default::default() });
    let (rho, parts) = par::sequential(|| {
        let mut s = session_for(d, Method::Scdtour, KChoice::Dims(20), 0.25);
        let mut parts = Vec::new();
        let t = Instant::now();
        s.ensure_ica().unwrap();
        parts.push(format!("ica {:.0}s", t.elapsed().as_secs_f64()));
        let t = Instant::now();
        s.prepare(Method::Scdtour, 0.25).unwrap();
        parts.push(format!("importance+weights {:.1}s", t.elapsed().as_secs_f64()));
        let t = Instant::now();
        let cell = s.run_cell(Method::Scdtour, KChoice::Dims(20), 0.25).unwrap();
        parts.push(format!("tour+merge+score {:.1}s", t.elapsed().as_secs_f64()));
        (cell.spearman, parts)
    });
    Outcome::Pass(format!("k=20 spearman {rho:.3}; {}", parts.join(", ")))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [Criterion; 12] = [
        ("coefficient norm", Duration::from_secs(5), coefficient_norm),
        ("merge identity", Duration::from_secs(5), merge_identity),
        ("tsp oracle gap", Duration::from_secs(30), tsp_gap),
        ("procrustes", Duration::from_secs(10), procrustes),
        ("fastica recovery", Duration::from_secs(60), fastica_recovery),
        ("spearman oracle", Duration::MAX, spearman_oracle),
        ("importance oracle", Duration::MAX, importance_oracle),
        ("end-to-end synthetic", Duration::from_secs(120), end_to_end_synthetic),
        ("lambda endpoints", Duration::MAX, lambda_endpoints),
        ("prompt golden files", Duration::MAX, prompt_golden_files),
        ("glove similarity", Duration::MAX, glove_similarity),
        ("desk-scale runtime", Duration::from_secs(600), desk_scale),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let over = elapsed > budget;
        let (tag, detail) = match outcome {
            Outcome::Pass(d) if over => ("FAIL", format!("{d}; over the {}s budget", budget.as_secs())),
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag}  {name:<22} {detail} [{:.2}s]", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
