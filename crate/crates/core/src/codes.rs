//! Random parity-check matrices for tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::tanner::TannerGraph;

/// Random code with each bit's column weight drawn from `col_weights` and
/// about `mean_row_weight` bits per check. Edges are dealt by shuffling
/// sockets; a bit that lands twice on one check keeps a single edge.
pub fn random_code<R: Rng>(rng: &mut R, n: usize, col_weights: &[usize], mean_row_weight: f64) -> TannerGraph {
    assert!(n > 0 && !col_weights.is_empty() && mean_row_weight >= 1.0);
    let mut sockets: Vec<usize> = Vec::new();
    for b in 0..n {
        let w = *col_weights.choose(rng).expect("non-empty");
        sockets.extend(std::iter::repeat_n(b, w));
    }
    let m = ((sockets.len() as f64 / mean_row_weight).round() as usize).max(1);
    let mut rows = vec![Vec::new(); m];
    // Every check gets at least one bit before the rest are scattered.
    sockets.shuffle(rng);
    for (i, b) in sockets.into_iter().enumerate() {
        let c = if i < m { i } else { rng.gen_range(0..m) };
        rows[c].push(b);
    }
    for r in &mut rows {
        r.sort_unstable();
        r.dedup();
    }
    rows.retain(|r| !r.is_empty());
    TannerGraph::from_rows(n, rows).expect("rows are in range")
}

/// Column weight exactly two: each bit joins two distinct checks.
pub fn cycle_code<R: Rng>(rng: &mut R, n: usize, m: usize) -> TannerGraph {
    assert!(m >= 2);
    let mut rows = vec![Vec::new(); m];
    for b in 0..n {
        let a = rng.gen_range(0..m);
        let mut c = rng.gen_range(0..m - 1);
        if c >= a {
            c += 1;
        }
        rows[a].push(b);
        rows[c].push(b);
    }
    rows.retain(|r| !r.is_empty());
    TannerGraph::from_rows(n, rows).expect("rows are in range")
}

/// A Tanner graph that is a tree: each new check shares exactly one bit
/// with the checks before it. Row weights fall in `2..=max_row_weight`.
pub fn tree_code<R: Rng>(rng: &mut R, n_checks: usize, max_row_weight: usize) -> TannerGraph {
    assert!(n_checks > 0 && max_row_weight >= 2);
    let mut rows = Vec::with_capacity(n_checks);
    let mut n_bits = 0;
    for c in 0..n_checks {
        let k = rng.gen_range(2..=max_row_weight);
        let mut row = Vec::with_capacity(k);
        if c > 0 {
            row.push(rng.gen_range(0..n_bits));
        }
        while row.len() < k {
            row.push(n_bits);
            n_bits += 1;
        }
        rows.push(row);
    }
    TannerGraph::from_rows(n_bits, rows).expect("rows are in range")
}

/// Rows and columns of an upper-triangular matrix with a unit diagonal,
/// both randomly permuted. Each row gets up to `extra` further entries to
/// its right.
pub fn permuted_triangular<R: Rng>(rng: &mut R, m: usize, n: usize, extra: usize) -> TannerGraph {
    assert!(n >= m && m > 0);
    let mut col_perm: Vec<usize> = (0..n).collect();
    col_perm.shuffle(rng);
    let mut rows: Vec<Vec<usize>> = (0..m)
        .map(|r| {
            let mut row = vec![r];
            if r + 1 < n {
                for _ in 0..rng.gen_range(0..=extra) {
                    row.push(rng.gen_range(r + 1..n));
                }
            }
            let mut row: Vec<usize> = row.into_iter().map(|c| col_perm[c]).collect();
            row.sort_unstable();
            row.dedup();
            row
        })
        .collect();
    rows.shuffle(rng);
    TannerGraph::from_rows(n, rows).expect("rows are in range")
}
