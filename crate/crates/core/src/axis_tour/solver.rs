use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_permutation, Result, TourOrder, WeightMatrix};
use crate::par;

const IMPROVE_EPS: f64 = 1e-12;
const MAX_SEGMENT: usize = 3;
/// Upper bound on perturbation rounds per restart.
const MAX_KICKS: usize = 50;

/// `w(σ_m, σ_1) + Σ w(σ_i, σ_{i+1})`, summed in walk order starting with the closing edge.
pub fn tour_cost(cycle: &[usize], w: &WeightMatrix) -> f64 {
    let m = cycle.len();
    if m == 0 {
        return 0.0;
    }
    let mut cost = w.get(cycle[m - 1], cycle[0]);
    for pair in cycle.windows(2) {
        cost += w.get(pair[0], pair[1]);
    }
    cost
}

/// Linear order plus the removed edge (`None` for a single axis).
pub type CutTour = (Vec<usize>, Option<(usize, usize)>);

/// Drop the heaviest cycle edge and walk from the node after it.
///
/// Ties prefer the closing edge `(σ_m, σ_1)`, then the lexicographically
/// smallest `(min, max)` endpoint pair.
pub fn cut_cycle(cycle: &[usize], w: &WeightMatrix) -> Result<CutTour> {
    let m = cycle.len();
    check_permutation(cycle, w.size())?;
    if m == 1 {
        return Ok((cycle.to_vec(), None));
    }
    let edge = |p: usize| (cycle[p], cycle[(p + 1) % m]);
    let key = |p: usize| {
        let (a, b) = edge(p);
        (a.min(b), a.max(b))
    };
    let closing = m - 1;
    let mut best = closing;
    for p in 0..m - 1 {
        let (a, b) = edge(p);
        let (ba, bb) = edge(best);
        let (wp, wb) = (w.get(a, b), w.get(ba, bb));
        let better = wp > wb || (wp == wb && best != closing && key(p) < key(best));
        if better {
            best = p;
        }
    }
    let start = (best + 1) % m;
    let linear = (0..m).map(|i| cycle[(start + i) % m]).collect();
    Ok((linear, Some(edge(best))))
}

/// Rotate so the tour starts at axis 0 and its second node is the smaller neighbour.
fn canonical(mut cycle: Vec<usize>) -> Vec<usize> {
    let m = cycle.len();
    if let Some(p) = cycle.iter().position(|&a| a == 0) {
        cycle.rotate_left(p);
    }
    if m > 2 && cycle[1] > cycle[m - 1] {
        cycle[1..].reverse();
    }
    cycle
}

fn nearest_neighbour(w: &WeightMatrix, start: usize) -> Vec<usize> {
    let m = w.size();
    let mut used = vec![false; m];
    let mut tour = Vec::with_capacity(m);
    let mut cur = start;
    used[cur] = true;
    tour.push(cur);
    for _ in 1..m {
        let mut next = usize::MAX;
        let mut best = f64::INFINITY;
        for (c, &u) in used.iter().enumerate() {
            if !u && w.get(cur, c) < best {
                best = w.get(cur, c);
                next = c;
            }
        }
        used[next] = true;
        tour.push(next);
        cur = next;
    }
    tour
}

/// Best-improvement 2-opt move; returns whether the tour changed.
fn two_opt_step(t: &mut [usize], w: &WeightMatrix) -> bool {
    let m = t.len();
    let mut best = -IMPROVE_EPS;
    let mut mv = None;
    for i in 0..m - 2 {
        let (a, b) = (t[i], t[i + 1]);
        let j_end = if i == 0 { m - 1 } else { m };
        for j in (i + 2)..j_end {
            let (c, d) = (t[j], t[(j + 1) % m]);
            let delta = w.get(a, c) + w.get(b, d) - w.get(a, b) - w.get(c, d);
            if delta < best {
                best = delta;
                mv = Some((i, j));
            }
        }
    }
    match mv {
        Some((i, j)) => {
            t[i + 1..=j].reverse();
            true
        }
        None => false,
    }
}

/// Best-improvement Or-opt move: relocate a segment of 1..=3 nodes,
/// optionally reversed, between two other adjacent nodes.
fn or_opt_step(t: &mut Vec<usize>, w: &WeightMatrix) -> bool {
    let m = t.len();
    let mut best = -IMPROVE_EPS;
    let mut mv = None;
    for len in 1..=MAX_SEGMENT.min(m - 2) {
        for i in 0..m {
            let first = t[i];
            let last = t[(i + len - 1) % m];
            let prev = t[(i + m - 1) % m];
            let next = t[(i + len) % m];
            let removal = w.get(prev, first) + w.get(last, next) - w.get(prev, next);
            // insertion edges (t[p], t[p+1]) that do not touch the segment
            for k in 0..(m - len - 1) {
                let p = (i + len + k) % m;
                let (u, v) = (t[p], t[(p + 1) % m]);
                let base = w.get(u, v);
                let fwd = w.get(u, first) + w.get(last, v) - base - removal;
                let rev = w.get(u, last) + w.get(first, v) - base - removal;
                if fwd < best {
                    best = fwd;
                    mv = Some((i, len, p, false));
                }
                if rev < best {
                    best = rev;
                    mv = Some((i, len, p, true));
                }
            }
        }
    }
    let Some((i, len, p, reversed)) = mv else { return false };
    let mut segment: Vec<usize> = (0..len).map(|k| t[(i + k) % m]).collect();
    if reversed {
        segment.reverse();
    }
    let anchor = t[p];
    let mut rest: Vec<usize> = (0..m - len).map(|k| t[(i + len + k) % m]).collect();
    let pos = rest.iter().position(|&a| a == anchor).expect("anchor outside segment");
    rest.splice(pos + 1..pos + 1, segment);
    *t = rest;
    true
}

fn local_search(mut t: Vec<usize>, w: &WeightMatrix) -> Vec<usize> {
    if t.len() < 4 {
        return t;
    }
    loop {
        if two_opt_step(&mut t, w) {
            continue;
        }
        if or_opt_step(&mut t, w) {
            continue;
        }
        return t;
    }
}

/// Random double-bridge move: `A B C D` becomes `A C B D`.
fn double_bridge<R: Rng>(t: &[usize], rng: &mut R) -> Vec<usize> {
    let m = t.len();
    let mut cuts = rand::seq::index::sample(rng, m - 1, 3).into_vec();
    cuts.iter_mut().for_each(|c| *c += 1);
    cuts.sort_unstable();
    let (a, b, c) = (cuts[0], cuts[1], cuts[2]);
    [&t[..a], &t[b..c], &t[a..b], &t[c..]].concat()
}

/// Local search from a nearest-neighbour tour, then up to `min(m, 50)`
/// double-bridge kicks, each kept only if the re-optimised tour is cheaper.
fn restart_tour(w: &WeightMatrix, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = w.size();
    let start = rng.random_range(0..m);
    let mut best = local_search(nearest_neighbour(w, start), w);
    if m < 8 {
        return best;
    }
    let mut best_cost = tour_cost(&best, w);
    for _ in 0..m.min(MAX_KICKS) {
        let cand = local_search(double_bridge(&best, rng), w);
        let cost = tour_cost(&cand, w);
        if cost < best_cost - IMPROVE_EPS {
            best = cand;
            best_cost = cost;
        }
    }
    best
}

/// Heuristic tour: nearest-neighbour construction from a seeded random
/// start, 2-opt and Or-opt to a local optimum, then double-bridge kicks.
/// Restart `r` uses seed `seed + r`; the cheapest tour wins, ties to the
/// lowest restart.
pub fn solve_tour(w: &WeightMatrix, seed: u64, restarts: usize) -> TourOrder {
    let restarts = restarts.max(1);
    let runs = par::map_range(restarts, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let cycle = canonical(restart_tour(w, &mut rng));
        let cost = tour_cost(&cycle, w);
        (cycle, cost)
    });
    let (cycle, _) = runs
        .into_iter()
        .reduce(|best, cur| if cur.1 < best.1 { cur } else { best })
        .expect("at least one restart");
    TourOrder::from_cycle(cycle, w).expect("solver returns a permutation")
}

pub(super) fn canonical_cycle(cycle: Vec<usize>) -> Vec<usize> {
    canonical(cycle)
}
