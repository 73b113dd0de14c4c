//! Tanner graph storage and node subsets.
//!
//! Bits and checks are dense `usize` indices. Both adjacency directions are
//! kept sorted so that "lowest index" tie-breaks are cheap everywhere.

use std::collections::{BTreeMap, VecDeque};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gf2::DenseGf2Matrix;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TannerGraph {
    n_bits: usize,
    checks: Vec<Vec<usize>>,
    bits: Vec<Vec<usize>>,
}

impl TannerGraph {
    /// Builds a graph from one list of bit indices per check. Rows must be
    /// non-empty, in range and free of repeats.
    pub fn from_rows(n_bits: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        if let Some(c) = rows.iter().position(|r| r.is_empty()) {
            return Err(Error::Usage(format!("check {c} has no bits")));
        }
        Self::from_rows_allow_empty(n_bits, rows)
    }

    /// Like [`TannerGraph::from_rows`] but keeps empty checks. Local views of
    /// a region can legitimately contain checks whose bits all lie outside it.
    pub(crate) fn from_rows_allow_empty(n_bits: usize, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut bits = vec![Vec::new(); n_bits];
        for (c, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            if let Some(w) = row.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::Usage(format!("check {c} lists bit {} twice", w[0])));
            }
            for &b in row.iter() {
                if b >= n_bits {
                    return Err(Error::Usage(format!("check {c} refers to bit {b} but n = {n_bits}")));
                }
                bits[b].push(c);
            }
        }
        Ok(TannerGraph { n_bits, checks: rows, bits })
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn n_checks(&self) -> usize {
        self.checks.len()
    }

    /// Bits adjacent to check `c`, ascending.
    pub fn check(&self, c: usize) -> &[usize] {
        &self.checks[c]
    }

    /// Checks adjacent to bit `b`, ascending.
    pub fn bit(&self, b: usize) -> &[usize] {
        &self.bits[b]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.checks
    }

    pub fn n_edges(&self) -> usize {
        self.checks.iter().map(Vec::len).sum()
    }

    pub fn max_bit_degree(&self) -> usize {
        self.bits.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_check_degree(&self) -> usize {
        self.checks.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Mean check degree (mean row weight).
    pub fn mean_check_degree(&self) -> f64 {
        if self.checks.is_empty() {
            0.0
        } else {
            self.n_edges() as f64 / self.checks.len() as f64
        }
    }

    /// Appends a check and returns its index.
    pub fn push_check(&mut self, mut row: Vec<usize>) -> Result<usize> {
        row.sort_unstable();
        row.dedup();
        if let Some(&b) = row.iter().find(|&&b| b >= self.n_bits) {
            return Err(Error::Usage(format!("bit {b} out of range")));
        }
        let c = self.checks.len();
        for &b in &row {
            self.bits[b].push(c);
        }
        self.checks.push(row);
        Ok(c)
    }

    pub fn bit_degree_histogram(&self) -> BTreeMap<usize, usize> {
        histogram(self.bits.iter().map(Vec::len))
    }

    pub fn check_degree_histogram(&self) -> BTreeMap<usize, usize> {
        histogram(self.checks.iter().map(Vec::len))
    }

    pub fn to_dense(&self) -> DenseGf2Matrix {
        DenseGf2Matrix::from_row_indices(self.n_bits, &self.checks)
            .expect("rows are validated on construction")
    }

    /// SHA-256 over a canonical little-endian encoding of the adjacency.
    /// Schedule files carry it so that a schedule cannot be replayed against
    /// the wrong matrix.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"tanner-v1");
        h.update((self.n_bits as u64).to_le_bytes());
        h.update((self.checks.len() as u64).to_le_bytes());
        for row in &self.checks {
            h.update((row.len() as u64).to_le_bytes());
            for &b in row {
                h.update((b as u64).to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

fn histogram(degrees: impl Iterator<Item = usize>) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for d in degrees {
        *h.entry(d).or_insert(0) += 1;
    }
    h
}

/// A small graph cut out of a larger one, with maps back to the parent ids.
/// Local ids follow the parent order, so lowest-index tie-breaks agree.
#[derive(Clone, Debug)]
pub(crate) struct Induced {
    pub graph: TannerGraph,
    pub bits: Vec<usize>,
    pub checks: Vec<usize>,
}

impl Induced {
    /// `bits` and `checks` must be sorted. Rows are restricted to `bits`.
    pub fn new<'a>(row: impl Fn(usize) -> &'a [usize], bits: Vec<usize>, checks: Vec<usize>) -> Induced {
        debug_assert!(bits.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(checks.windows(2).all(|w| w[0] < w[1]));
        let rows = checks
            .iter()
            .map(|&c| row(c).iter().filter_map(|b| bits.binary_search(b).ok()).collect())
            .collect();
        let graph = TannerGraph::from_rows_allow_empty(bits.len(), rows).expect("local rows are in range");
        Induced { graph, bits, checks }
    }

    pub fn of(g: &TannerGraph, bits: Vec<usize>, checks: Vec<usize>) -> Induced {
        Induced::new(|c| g.check(c), bits, checks)
    }

    pub fn local_check(&self, c: usize) -> Option<usize> {
        self.checks.binary_search(&c).ok()
    }
}

/// A subset of bit and check nodes of one graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubgraphMask {
    bits: Vec<bool>,
    checks: Vec<bool>,
}

impl SubgraphMask {
    pub fn empty(g: &TannerGraph) -> Self {
        SubgraphMask { bits: vec![false; g.n_bits()], checks: vec![false; g.n_checks()] }
    }

    pub fn full(g: &TannerGraph) -> Self {
        SubgraphMask { bits: vec![true; g.n_bits()], checks: vec![true; g.n_checks()] }
    }

    pub fn from_nodes(g: &TannerGraph, bits: &[usize], checks: &[usize]) -> Result<Self> {
        let mut m = SubgraphMask::empty(g);
        for &b in bits {
            if b >= g.n_bits() {
                return Err(Error::Usage(format!("bit {b} out of range")));
            }
            m.bits[b] = true;
        }
        for &c in checks {
            if c >= g.n_checks() {
                return Err(Error::Usage(format!("check {c} out of range")));
            }
            m.checks[c] = true;
        }
        Ok(m)
    }

    /// The given checks together with every bit they touch.
    pub fn closure_of_checks(g: &TannerGraph, checks: &[usize]) -> Result<Self> {
        let mut m = SubgraphMask::from_nodes(g, &[], checks)?;
        for &c in checks {
            for &b in g.check(c) {
                m.bits[b] = true;
            }
        }
        Ok(m)
    }

    pub fn contains_bit(&self, b: usize) -> bool {
        self.bits[b]
    }

    pub fn contains_check(&self, c: usize) -> bool {
        self.checks[c]
    }

    pub fn set_bit(&mut self, b: usize, v: bool) {
        self.bits[b] = v;
    }

    pub fn set_check(&mut self, c: usize, v: bool) {
        self.checks[c] = v;
    }

    pub fn bits(&self) -> Vec<usize> {
        ones(&self.bits)
    }

    pub fn checks(&self) -> Vec<usize> {
        ones(&self.checks)
    }

    pub fn n_bits_in(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn n_checks_in(&self) -> usize {
        self.checks.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b) && !self.checks.iter().any(|&c| c)
    }

    /// Every node of the graph that is not in `self`.
    pub fn complement(&self) -> SubgraphMask {
        SubgraphMask {
            bits: self.bits.iter().map(|b| !b).collect(),
            checks: self.checks.iter().map(|c| !c).collect(),
        }
    }

    /// Nodes in `self` but not in `other`.
    pub fn minus(&self, other: &SubgraphMask) -> SubgraphMask {
        SubgraphMask {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && !b).collect(),
            checks: self.checks.iter().zip(&other.checks).map(|(a, b)| *a && !b).collect(),
        }
    }

    pub fn union(&self, other: &SubgraphMask) -> SubgraphMask {
        SubgraphMask {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
            checks: self.checks.iter().zip(&other.checks).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// True when both masks have the sizes of `g`.
    pub fn fits(&self, g: &TannerGraph) -> bool {
        self.bits.len() == g.n_bits() && self.checks.len() == g.n_checks()
    }
}

fn ones(v: &[bool]) -> Vec<usize> {
    v.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i).collect()
}

/// Number of bits of `check` that lie outside `s`.
pub fn outsider_count(g: &TannerGraph, s: &SubgraphMask, check: usize) -> usize {
    g.check(check).iter().filter(|&&b| !s.contains_bit(b)).count()
}

/// Per-node component labels of the subgraph induced by `s`.
pub(crate) struct ComponentLabels {
    pub count: usize,
    pub bit: Vec<Option<usize>>,
    pub check: Vec<Option<usize>>,
}

pub(crate) fn component_labels(g: &TannerGraph, s: &SubgraphMask) -> ComponentLabels {
    let mut bit = vec![None; g.n_bits()];
    let mut check = vec![None; g.n_checks()];
    let mut count = 0;
    let mut queue = VecDeque::new();
    // Seeds are visited bits first, then checks, each ascending, so component
    // numbering is deterministic.
    let seeds = (0..g.n_bits()).map(Node::Bit).chain((0..g.n_checks()).map(Node::Check));
    for seed in seeds {
        let fresh = match seed {
            Node::Bit(b) => s.contains_bit(b) && bit[b].is_none(),
            Node::Check(c) => s.contains_check(c) && check[c].is_none(),
        };
        if !fresh {
            continue;
        }
        match seed {
            Node::Bit(b) => bit[b] = Some(count),
            Node::Check(c) => check[c] = Some(count),
        }
        queue.push_back(seed);
        while let Some(node) = queue.pop_front() {
            match node {
                Node::Bit(b) => {
                    for &c in g.bit(b) {
                        if s.contains_check(c) && check[c].is_none() {
                            check[c] = Some(count);
                            queue.push_back(Node::Check(c));
                        }
                    }
                }
                Node::Check(c) => {
                    for &b in g.check(c) {
                        if s.contains_bit(b) && bit[b].is_none() {
                            bit[b] = Some(count);
                            queue.push_back(Node::Bit(b));
                        }
                    }
                }
            }
        }
        count += 1;
    }
    ComponentLabels { count, bit, check }
}

#[derive(Clone, Copy)]
enum Node {
    Bit(usize),
    Check(usize),
}

/// Connected components of the subgraph induced by `s`, ordered by their
/// lowest bit (components without bits come last, by lowest check).
pub fn connected_components(g: &TannerGraph, s: &SubgraphMask) -> Vec<SubgraphMask> {
    let labels = component_labels(g, s);
    let mut out = vec![SubgraphMask::empty(g); labels.count];
    for (b, l) in labels.bit.iter().enumerate() {
        if let Some(l) = l {
            out[*l].bits[b] = true;
        }
    }
    for (c, l) in labels.check.iter().enumerate() {
        if let Some(l) = l {
            out[*l].checks[c] = true;
        }
    }
    out
}

/// A check viewed inside one piece. Bits already known (from earlier pieces)
/// act as a constant right-hand side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneralizedCheck {
    pub check: usize,
    pub live_bits: Vec<usize>,
    pub rhs_sources: Vec<usize>,
}

/// Splits each check of `piece` into live bits and right-hand-side sources.
/// `known[b]` marks bits whose values are already fixed.
pub fn generalize(g: &TannerGraph, piece: &SubgraphMask, known: &[bool]) -> Result<Vec<GeneralizedCheck>> {
    if known.len() != g.n_bits() || !piece.fits(g) {
        return Err(Error::Usage("mask or known-bit vector does not match the graph".into()));
    }
    Ok(piece
        .checks()
        .into_iter()
        .map(|c| {
            let (rhs_sources, live_bits) = g.check(c).iter().partition(|&&b| known[b]);
            GeneralizedCheck { check: c, live_bits, rhs_sources }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TannerGraph {
        // Two components: checks 0,1 share bit 2; check 2 stands alone.
        TannerGraph::from_rows(7, vec![vec![0, 1, 2], vec![2, 3], vec![4, 5]]).unwrap()
    }

    #[test]
    fn adjacency_is_symmetric_and_sorted() {
        let g = TannerGraph::from_rows(4, vec![vec![3, 0], vec![1, 3]]).unwrap();
        assert_eq!(g.check(0), &[0, 3]);
        assert_eq!(g.bit(3), &[0, 1]);
        assert_eq!(g.n_edges(), 4);
        assert_eq!(g.max_bit_degree(), 2);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(TannerGraph::from_rows(3, vec![vec![0, 3]]).is_err());
        assert!(TannerGraph::from_rows(3, vec![vec![1, 1]]).is_err());
        assert!(TannerGraph::from_rows(3, vec![vec![]]).is_err());
    }

    #[test]
    fn components_include_isolated_bits() {
        let g = sample();
        let comps = connected_components(&g, &SubgraphMask::full(&g));
        assert_eq!(comps.len(), 3);
        assert_eq!(comps[0].bits(), vec![0, 1, 2, 3]);
        assert_eq!(comps[0].checks(), vec![0, 1]);
        assert_eq!(comps[1].bits(), vec![4, 5]);
        assert_eq!(comps[2].bits(), vec![6]);
        assert!(comps[2].checks().is_empty());
    }

    #[test]
    fn complement_of_complement() {
        let g = sample();
        let m = SubgraphMask::from_nodes(&g, &[1, 4], &[2]).unwrap();
        assert_eq!(m.complement().complement(), m);
        assert_eq!(m.union(&m.complement()), SubgraphMask::full(&g));
        assert!(m.minus(&m).is_empty());
    }

    #[test]
    fn outsiders_and_generalized_checks() {
        let g = sample();
        let s = SubgraphMask::from_nodes(&g, &[0, 1], &[0]).unwrap();
        assert_eq!(outsider_count(&g, &s, 0), 1);
        let mut known = vec![false; 7];
        known[2] = true;
        let gen = generalize(&g, &SubgraphMask::from_nodes(&g, &[], &[0, 1]).unwrap(), &known).unwrap();
        assert_eq!(gen[0].live_bits, vec![0, 1]);
        assert_eq!(gen[0].rhs_sources, vec![2]);
        assert_eq!(gen[1].live_bits, vec![3]);
    }

    #[test]
    fn digest_depends_on_adjacency() {
        let a = TannerGraph::from_rows(3, vec![vec![0, 1]]).unwrap();
        let b = TannerGraph::from_rows(3, vec![vec![0, 2]]).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
    }

    /// Union-find over all edges, used as an independent check of the BFS.
    fn union_find_components(g: &TannerGraph) -> usize {
        let n = g.n_bits() + g.n_checks();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let next = p[y];
                p[y] = r;
                y = next;
            }
            r
        }
        for c in 0..g.n_checks() {
            for &b in g.check(c) {
                let (x, y) = (find(&mut parent, b), find(&mut parent, g.n_bits() + c));
                parent[x] = y;
            }
        }
        (0..n).filter(|&x| find(&mut parent, x) == x).count()
    }

    fn graph() -> impl Strategy<Value = TannerGraph> {
        (1usize..30, 1usize..15).prop_flat_map(|(n, m)| {
            prop::collection::vec(prop::collection::btree_set(0..n, 1..5.min(n + 1)), m).prop_map(
                move |rows| TannerGraph::from_rows(n, rows.into_iter().map(|r| r.into_iter().collect()).collect()).unwrap(),
            )
        })
    }

    proptest! {
        #[test]
        fn components_match_union_find(g in graph()) {
            let comps = connected_components(&g, &SubgraphMask::full(&g));
            prop_assert_eq!(comps.len(), union_find_components(&g));
            let mut covered = SubgraphMask::empty(&g);
            for c in &comps {
                prop_assert!(!c.is_empty());
                covered = covered.union(c);
            }
            prop_assert_eq!(covered, SubgraphMask::full(&g));
        }

        #[test]
        fn degree_sums_agree(g in graph()) {
            let from_bits: usize = (0..g.n_bits()).map(|b| g.bit(b).len()).sum();
            prop_assert_eq!(from_bits, g.n_edges());
        }
    }
}
