use super::solver::canonical_cycle;
use super::{Result, TourError, TourOrder, WeightMatrix};

/// Largest axis count the bitmask DP accepts.
pub const HELD_KARP_MAX: usize = 14;

/// Exact minimum-cost closed tour by Held-Karp dynamic programming.
pub fn held_karp(w: &WeightMatrix) -> Result<TourOrder> {
    let m = w.size();
    if m > HELD_KARP_MAX {
        return Err(TourError::TooLarge(m));
    }
    if m <= 3 {
        return TourOrder::from_cycle((0..m).collect(), w);
    }
    // paths start at node 0; subsets are over nodes 1..m, bit (j-1) for node j
    let k = m - 1;
    let full = 1usize << k;
    let mut dp = vec![f64::INFINITY; full * k];
    let mut parent = vec![usize::MAX; full * k];
    for j in 0..k {
        dp[(1 << j) * k + j] = w.get(0, j + 1);
    }
    for mask in 1..full {
        for j in 0..k {
            if mask & (1 << j) == 0 {
                continue;
            }
            let cur = dp[mask * k + j];
            if !cur.is_finite() {
                continue;
            }
            for nxt in 0..k {
                if mask & (1 << nxt) != 0 {
                    continue;
                }
                let nmask = mask | (1 << nxt);
                let cand = cur + w.get(j + 1, nxt + 1);
                if cand < dp[nmask * k + nxt] {
                    dp[nmask * k + nxt] = cand;
                    parent[nmask * k + nxt] = j;
                }
            }
        }
    }
    let last_mask = full - 1;
    let (mut end, mut best) = (0, f64::INFINITY);
    for j in 0..k {
        let c = dp[last_mask * k + j] + w.get(j + 1, 0);
        if c < best {
            best = c;
            end = j;
        }
    }
    let mut path = Vec::with_capacity(m);
    let (mut mask, mut j) = (last_mask, end);
    while j != usize::MAX {
        path.push(j + 1);
        let p = parent[mask * k + j];
        mask &= !(1 << j);
        j = p;
    }
    path.push(0);
    path.reverse();
    TourOrder::from_cycle(canonical_cycle(path), w)
}
