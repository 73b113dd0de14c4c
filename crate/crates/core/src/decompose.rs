//! Splitting high-degree bits and decomposing a Tanner graph into an ordered
//! list of pieces (pseudo-trees and encoding stopping sets).
//!
//! Pieces are extracted in order; a check of piece `i` may read bits of
//! pieces before `i` as known values but never bits of later pieces. When
//! the growth step turns up a set of dependent checks, the highest-index one
//! is dropped and replaced by a synthesized check (the XOR of the whole
//! set), which only involves bits of earlier pieces. That check joins the
//! latest piece it touches as an attached check, solved for one free bit of
//! that piece after everything else in it. If the piece already implies it,
//! the piece is merged into the one before and the check tried there; a
//! check implied by the first piece is dropped.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::gf2::BitWord;
use crate::structures::{
    build_pseudo_tree, classify_any_fold, dependency_of, key_functionals, peel, reevaluated_bits_valid, sym_diff,
    Grower, PseudoTree, StoppingSetCandidate, StoppingSetKind,
};
use crate::tanner::{component_labels, Induced, SubgraphMask, TannerGraph};

/// How high-degree bits were replaced by chains of degree-3 clones.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitMap {
    pub original_n_bits: usize,
    pub original_n_checks: usize,
    /// Original bit → its clone chain. The original id is the last link.
    pub clones: BTreeMap<usize, Vec<usize>>,
    /// Auxiliary degree-2 checks as (check id, bit, bit); each forces equality.
    pub aux_checks: Vec<(usize, usize, usize)>,
}

impl SplitMap {
    pub fn is_identity(&self) -> bool {
        self.clones.is_empty()
    }

    /// Copies every original bit value onto its clones.
    pub fn expand(&self, x: &[bool], n_split_bits: usize) -> Vec<bool> {
        let mut out = x.to_vec();
        out.resize(n_split_bits, false);
        for (&orig, chain) in &self.clones {
            for &c in chain {
                out[c] = x[orig];
            }
        }
        out
    }
}

/// Replaces each bit of degree k > 3 by k − 2 clones joined by k − 3
/// equality checks. The first clone takes the two lowest checks, middle
/// clones one each, and the original id keeps the last two.
pub fn split_high_degree(g: &TannerGraph) -> (TannerGraph, SplitMap) {
    let mut rows: Vec<Vec<usize>> = g.rows().to_vec();
    let mut map = SplitMap { original_n_bits: g.n_bits(), original_n_checks: g.n_checks(), ..Default::default() };
    let mut next_bit = g.n_bits();
    let mut aux_rows = Vec::new();
    for x in 0..g.n_bits() {
        let checks = g.bit(x);
        let k = checks.len();
        if k <= 3 {
            continue;
        }
        let mut chain: Vec<usize> = (next_bit..next_bit + k - 3).collect();
        next_bit += k - 3;
        chain.push(x);
        let owner = |i: usize| if i < 2 { 0 } else { (i - 1).min(k - 3) };
        for (i, &c) in checks.iter().enumerate() {
            let clone = chain[owner(i)];
            if clone != x {
                let row = &mut rows[c];
                let pos = row.iter().position(|&b| b == x).expect("adjacency is symmetric");
                row[pos] = clone;
            }
        }
        for w in chain.windows(2) {
            let id = g.n_checks() + aux_rows.len();
            aux_rows.push(vec![w[0], w[1]]);
            map.aux_checks.push((id, w[0], w[1]));
        }
        map.clones.insert(x, chain);
    }
    rows.extend(aux_rows);
    let split = TannerGraph::from_rows(next_bit, rows).expect("split rows stay valid");
    (split, map)
}

/// A check that replaces a dropped dependent check. Its row is the XOR of
/// its constituents' rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthesizedCheck {
    pub id: usize,
    /// Original checks whose XOR this is.
    pub constituents: Vec<usize>,
    pub row: Vec<usize>,
}

/// A synthesized check solved for `solve_for` once the rest of its piece is
/// encoded. Flipping `solve_for` (and the parities it feeds) leaves every
/// earlier key of the piece satisfied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttachedCheck {
    pub check: usize,
    pub solve_for: usize,
}

#[derive(Clone, Debug)]
pub struct TreePiece {
    pub bits: Vec<usize>,
    /// Tree checks and attached checks.
    pub checks: Vec<usize>,
    pub tree: PseudoTree,
    pub attached: Vec<AttachedCheck>,
}

#[derive(Clone, Debug)]
pub struct StoppingSetPiece {
    pub bits: Vec<usize>,
    pub checks: Vec<usize>,
    pub key_checks: Vec<usize>,
    pub reevaluated_bits: Vec<usize>,
    /// The piece minus its key checks.
    pub residual: PseudoTree,
    /// Each key check over the residual's information bits.
    pub key_functionals: Vec<Vec<usize>>,
    pub attached: Vec<AttachedCheck>,
}

impl StoppingSetPiece {
    pub fn fold(&self) -> usize {
        self.key_checks.len()
    }
}

#[derive(Clone, Debug)]
pub enum Piece {
    Tree(TreePiece),
    StoppingSet(StoppingSetPiece),
}

impl Piece {
    pub fn bits(&self) -> &[usize] {
        match self {
            Piece::Tree(p) => &p.bits,
            Piece::StoppingSet(p) => &p.bits,
        }
    }

    pub fn checks(&self) -> &[usize] {
        match self {
            Piece::Tree(p) => &p.checks,
            Piece::StoppingSet(p) => &p.checks,
        }
    }

    /// The pseudo-tree computed first: the whole tree, or a stopping set's
    /// residual.
    pub fn tree(&self) -> &PseudoTree {
        match self {
            Piece::Tree(p) => &p.tree,
            Piece::StoppingSet(p) => &p.residual,
        }
    }

    pub fn attached(&self) -> &[AttachedCheck] {
        match self {
            Piece::Tree(p) => &p.attached,
            Piece::StoppingSet(p) => &p.attached,
        }
    }

    /// Key checks found by growth; empty for a tree piece.
    pub fn key_checks(&self) -> &[usize] {
        match self {
            Piece::Tree(_) => &[],
            Piece::StoppingSet(p) => &p.key_checks,
        }
    }

    pub fn parity_bits(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.tree().parents().iter().map(|&(_, b)| b).collect();
        if let Piece::StoppingSet(p) = self {
            v.extend(&p.reevaluated_bits);
        }
        v.extend(self.attached().iter().map(|a| a.solve_for));
        v.sort_unstable();
        v
    }

    fn attach(&mut self, a: AttachedCheck) {
        let (checks, attached) = match self {
            Piece::Tree(p) => (&mut p.checks, &mut p.attached),
            Piece::StoppingSet(p) => (&mut p.checks, &mut p.attached),
        };
        if let Err(at) = checks.binary_search(&a.check) {
            checks.insert(at, a.check);
        }
        attached.push(a);
    }
}

/// How a change to one bit of a piece spreads through the parities of its
/// pseudo-tree when they are recomputed.
pub(crate) struct TreeIndex {
    /// Parity bit → (position in computation order, its check).
    parity: HashMap<usize, (usize, usize)>,
    /// Bit → parities whose checks read it as a source.
    readers: HashMap<usize, Vec<usize>>,
}

impl TreeIndex {
    pub(crate) fn new<'r>(tree: &PseudoTree, row: impl Fn(usize) -> &'r [usize]) -> Self {
        let in_tree: HashSet<usize> = tree.bits().into_iter().collect();
        let mut parity = HashMap::new();
        let mut readers: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, (c, p)) in tree.computation_order().into_iter().enumerate() {
            parity.insert(p, (i, c));
            for &b in row(c) {
                if b != p && in_tree.contains(&b) {
                    readers.entry(b).or_default().push(p);
                }
            }
        }
        TreeIndex { parity, readers }
    }

    /// Position of a parity in computation order.
    pub(crate) fn position(&self, p: usize) -> usize {
        self.parity[&p].0
    }

    /// `r` and every parity whose value flips with it, in computation order
    /// after `r`. `None` once more than `cap` parities are reachable.
    pub(crate) fn effect<'r>(&self, r: usize, row: impl Fn(usize) -> &'r [usize], cap: usize) -> Option<Vec<usize>> {
        let mut seen: HashSet<usize> = HashSet::new();
        let mut stack = vec![r];
        while let Some(b) = stack.pop() {
            for &p in self.readers.get(&b).map_or(&[][..], Vec::as_slice) {
                if seen.insert(p) {
                    if seen.len() > cap {
                        return None;
                    }
                    stack.push(p);
                }
            }
        }
        let mut reached: Vec<(usize, usize, usize)> = seen.into_iter().map(|p| (self.parity[&p].0, self.parity[&p].1, p)).collect();
        reached.sort_unstable();
        let mut ones: HashSet<usize> = HashSet::from([r]);
        let mut out = vec![r];
        for (_, c, p) in reached {
            if row(c).iter().filter(|&&b| b != p && ones.contains(&b)).count() % 2 == 1 {
                ones.insert(p);
                out.push(p);
            }
        }
        Some(out)
    }
}

#[derive(Clone, Debug)]
pub struct DecompositionPlan {
    /// Bits of the decomposed graph (after splitting, if any).
    pub n_bits: usize,
    /// Checks of the decomposed graph; synthesized ids start here.
    pub n_checks: usize,
    pub pieces: Vec<Piece>,
    pub synthesized: Vec<SynthesizedCheck>,
    /// Checks left out of every piece: dependent rows, each implied by the rest.
    pub deleted_checks: Vec<usize>,
    /// Information bits in the order input words are read.
    pub info_bits: Vec<usize>,
    pub parity_bits: Vec<usize>,
    pub split: Option<SplitMap>,
}

impl DecompositionPlan {
    /// Row of an original or synthesized check.
    pub fn row<'a>(&'a self, g: &'a TannerGraph, c: usize) -> &'a [usize] {
        if c < self.n_checks {
            g.check(c)
        } else {
            &self.synthesized[c - self.n_checks].row
        }
    }

    pub fn stopping_sets(&self) -> impl Iterator<Item = &StoppingSetPiece> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::StoppingSet(s) => Some(s),
            Piece::Tree(_) => None,
        })
    }

    /// Structural self-check against the graph the plan was built for.
    pub fn validate(&self, g: &TannerGraph) -> std::result::Result<(), String> {
        if g.n_bits() != self.n_bits || g.n_checks() != self.n_checks {
            return Err("plan was built for a different graph".into());
        }
        let mut bit_owner = vec![usize::MAX; self.n_bits];
        let mut check_seen = vec![false; self.n_checks + self.synthesized.len()];
        for (i, p) in self.pieces.iter().enumerate() {
            if p.bits().is_empty() {
                return Err(format!("piece {i} is empty"));
            }
            for &b in p.bits() {
                if bit_owner[b] != usize::MAX {
                    return Err(format!("bit {b} is in two pieces"));
                }
                bit_owner[b] = i;
            }
            for &c in p.checks() {
                if std::mem::replace(&mut check_seen[c], true) {
                    return Err(format!("check {c} is in two pieces"));
                }
            }
        }
        if let Some(b) = bit_owner.iter().position(|&o| o == usize::MAX) {
            return Err(format!("bit {b} is in no piece"));
        }
        for &c in &self.deleted_checks {
            if std::mem::replace(&mut check_seen[c], true) {
                return Err(format!("deleted check {c} is also used"));
            }
        }
        if let Some(c) = (0..self.n_checks).find(|&c| !check_seen[c]) {
            return Err(format!("check {c} is neither used nor deleted"));
        }
        for s in &self.synthesized {
            let xor = s.constituents.iter().fold(Vec::new(), |acc, &c| sym_diff(&acc, g.check(c)));
            if xor != s.row {
                return Err(format!("synthesized check {} is not the XOR of its constituents", s.id));
            }
        }
        for (i, p) in self.pieces.iter().enumerate() {
            let local = self.piece_mask(g, p);
            for &c in p.checks() {
                if self.row(g, c).iter().any(|&b| bit_owner[b] > i) {
                    return Err(format!("check {c} in piece {i} reads a bit of a later piece"));
                }
            }
            let mut tree_mask = SubgraphMask::full(&local.graph);
            for &k in p.key_checks().iter().chain(p.attached().iter().map(|a| &a.check)) {
                tree_mask.set_check(local.local_check(k).expect("piece check"), false);
            }
            crate::structures::validate_pseudo_tree(&local.graph, &tree_mask, &to_local(&local, p.tree()))
                .map_err(|e| format!("piece {i}: {e}"))?;
            if let Piece::StoppingSet(s) = p {
                if !reevaluated_bits_valid(&s.key_functionals, &s.reevaluated_bits) {
                    return Err(format!("piece {i}: reevaluated bits cannot be solved for"));
                }
            }
            let tree_parities: Vec<usize> = p.tree().parents().iter().map(|&(_, b)| b).collect();
            for a in p.attached() {
                if p.bits().binary_search(&a.solve_for).is_err() || tree_parities.contains(&a.solve_for) {
                    return Err(format!("piece {i}: attached check {} solves for a bit it cannot", a.check));
                }
            }
        }
        let mut labelled: Vec<usize> = self.info_bits.iter().chain(&self.parity_bits).copied().collect();
        labelled.sort_unstable();
        if labelled != (0..self.n_bits).collect::<Vec<_>>() {
            return Err("info and parity bits do not partition the bits".into());
        }
        Ok(())
    }

    fn piece_mask(&self, g: &TannerGraph, p: &Piece) -> Induced {
        Induced::new(|c| self.row(g, c), p.bits().to_vec(), p.checks().to_vec())
    }
}

fn to_local(local: &Induced, tree: &PseudoTree) -> PseudoTree {
    let mut bit_map = BTreeMap::new();
    for (i, &b) in local.bits.iter().enumerate() {
        bit_map.insert(b, i);
    }
    let max_b = local.bits.last().map_or(0, |&b| b + 1);
    let max_c = local.checks.last().map_or(0, |&c| c + 1);
    let mut bm = vec![usize::MAX; max_b];
    for (&b, &i) in &bit_map {
        bm[b] = i;
    }
    let mut cm = vec![usize::MAX; max_c];
    for (i, &c) in local.checks.iter().enumerate() {
        cm[c] = i;
    }
    tree.relabel(&bm, &cm)
}

/// Decomposes a graph of maximum bit degree 3.
pub fn decompose(g: &TannerGraph) -> Result<DecompositionPlan> {
    if g.max_bit_degree() > 3 {
        return Err(Error::Usage(format!(
            "bit degree {} exceeds 3; split high-degree bits first",
            g.max_bit_degree()
        )));
    }
    let labels = component_labels(g, &SubgraphMask::full(g));
    let mut comps = vec![(Vec::new(), Vec::new()); labels.count];
    for (b, l) in labels.bit.iter().enumerate() {
        comps[l.expect("full mask")].0.push(b);
    }
    for (c, l) in labels.check.iter().enumerate() {
        comps[l.expect("full mask")].1.push(c);
    }
    let mut d = Decomposer { g, synthesized: Vec::new(), deleted: Vec::new() };
    let mut pieces = Vec::new();
    for (bits, checks) in comps {
        for e in d.region(bits, checks)? {
            pieces.push(d.materialize(e)?);
        }
    }
    finish(g, pieces, d.synthesized, d.deleted, None)
}

/// Splits if needed, then decomposes. The plan refers to the split graph,
/// which is returned alongside.
pub fn plan(g: &TannerGraph) -> Result<(TannerGraph, DecompositionPlan)> {
    if g.max_bit_degree() <= 3 {
        return Ok((g.clone(), decompose(g)?));
    }
    let (split, map) = split_high_degree(g);
    let mut p = decompose(&split)?;
    p.split = Some(map);
    Ok((split, p))
}

fn finish(
    g: &TannerGraph,
    pieces: Vec<Piece>,
    synthesized: Vec<SynthesizedCheck>,
    mut deleted: Vec<usize>,
    info_order: Option<Vec<usize>>,
) -> Result<DecompositionPlan> {
    let mut is_parity = vec![false; g.n_bits()];
    for p in &pieces {
        for b in p.parity_bits() {
            is_parity[b] = true;
        }
    }
    let parity_bits: Vec<usize> = (0..g.n_bits()).filter(|&b| is_parity[b]).collect();
    let default_info: Vec<usize> = (0..g.n_bits()).filter(|&b| !is_parity[b]).collect();
    let info_bits = match info_order {
        Some(order) => {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != default_info {
                return Err(Error::Usage("info order must list exactly the information bits".into()));
            }
            order
        }
        None => default_info,
    };
    deleted.sort_unstable();
    Ok(DecompositionPlan {
        n_bits: g.n_bits(),
        n_checks: g.n_checks(),
        pieces,
        synthesized,
        deleted_checks: deleted,
        info_bits,
        parity_bits,
        split: None,
    })
}

/// Consecutive pieces encoded as one: every tree in order, then every key.
struct Entry {
    parts: Vec<Piece>,
    attached: Vec<AttachedCheck>,
    /// Built when the first synthesized check reaches the entry.
    solver: Option<KeySolver>,
}

impl From<Piece> for Entry {
    fn from(piece: Piece) -> Self {
        Entry { parts: vec![piece], attached: Vec::new(), solver: None }
    }
}

impl Entry {
    fn holds(&self, b: usize) -> bool {
        self.parts.iter().any(|p| p.bits().binary_search(&b).is_ok())
    }
}

/// Row-reduced key functionals of an entry, over its free bits, so that a
/// new check can be tested for independence and given a bit to solve for.
struct KeySolver {
    n_bits: usize,
    member: HashSet<usize>,
    /// (parity, its check) in computation order.
    order: Vec<(usize, usize)>,
    /// Bit → (part, tier). Later parts and lower tiers feed fewer parities.
    rank: HashMap<usize, (usize, usize)>,
    keys: Vec<usize>,
    /// Reduced functionals; row `i` is zero on every pivot before `i`.
    rows: Vec<BitWord>,
    /// Keys whose XOR yields each reduced row.
    combos: Vec<Vec<usize>>,
    pivots: Vec<usize>,
}

impl KeySolver {
    fn new<'r>(entry: &Entry, n_bits: usize, row: impl Fn(usize) -> &'r [usize]) -> Result<Self> {
        let mut s = KeySolver {
            n_bits,
            member: HashSet::new(),
            order: Vec::new(),
            rank: HashMap::new(),
            keys: Vec::new(),
            rows: Vec::new(),
            combos: Vec::new(),
            pivots: Vec::new(),
        };
        for p in &entry.parts {
            s.extend(p, &row)?;
        }
        for a in &entry.attached {
            s.add_forced(a.check, &[a.solve_for], &row)?;
        }
        Ok(s)
    }

    /// Appends a piece computed after everything already here.
    fn extend<'r>(&mut self, piece: &Piece, row: impl Fn(usize) -> &'r [usize]) -> Result<()> {
        let part = self.rank.values().map(|&(p, _)| p + 1).max().unwrap_or(0);
        self.member.extend(piece.bits());
        for (t, tb) in piece.tree().tiers().iter().enumerate().step_by(2) {
            for &b in tb {
                self.rank.insert(b, (part, t));
            }
        }
        self.order.extend(piece.tree().computation_order().into_iter().map(|(c, p)| (p, c)));
        let solved = match piece {
            Piece::StoppingSet(p) => p.reevaluated_bits.clone(),
            Piece::Tree(_) => Vec::new(),
        };
        for &c in piece.key_checks() {
            self.add_forced(c, &solved, &row)?;
        }
        Ok(())
    }

    fn add_forced<'r>(&mut self, c: usize, candidates: &[usize], row: impl Fn(usize) -> &'r [usize]) -> Result<()> {
        let (f, combo) = self.reduce(row(c), &row);
        let Some(&pivot) = candidates.iter().find(|&&b| f.get(b) && !self.pivots.contains(&b)) else {
            return Err(Error::Structural(format!("key check {c} cannot be solved for any of {candidates:?}")));
        };
        self.push(c, f, combo, pivot);
        Ok(())
    }

    /// Functional of `row` over the free bits, reduced by the rows so far,
    /// and the keys combined into it (the new row is index `keys.len()`).
    fn reduce<'r>(&self, row: &[usize], rows: impl Fn(usize) -> &'r [usize]) -> (BitWord, Vec<usize>) {
        let mut f = BitWord::zeros(self.n_bits);
        let toggle = |f: &mut BitWord, r: &[usize]| {
            for &b in r {
                if self.member.contains(&b) {
                    f.flip(b);
                }
            }
        };
        toggle(&mut f, row);
        for &(p, pc) in self.order.iter().rev() {
            if f.get(p) {
                toggle(&mut f, rows(pc));
            }
        }
        let mut combo = vec![self.keys.len()];
        for (i, r) in self.rows.iter().enumerate() {
            if f.get(self.pivots[i]) {
                f.xor_assign(r).expect("same length");
                combo = sym_diff(&combo, &self.combos[i]);
            }
        }
        (f, combo)
    }

    fn push(&mut self, c: usize, f: BitWord, combo: Vec<usize>, pivot: usize) {
        self.keys.push(c);
        self.rows.push(f);
        self.combos.push(combo);
        self.pivots.push(pivot);
    }

    /// The free bit a new independent row is solved for.
    fn pick(&self, f: &BitWord) -> usize {
        f.iter_ones()
            .min_by_key(|b| {
                let (part, tier) = self.rank[b];
                (std::cmp::Reverse(part), tier, *b)
            })
            .expect("non-zero functional")
    }
}

struct Decomposer<'g> {
    g: &'g TannerGraph,
    synthesized: Vec<SynthesizedCheck>,
    deleted: Vec<usize>,
}

impl Decomposer<'_> {
    fn row(&self, c: usize) -> &[usize] {
        let n = self.g.n_checks();
        if c < n {
            self.g.check(c)
        } else {
            &self.synthesized[c - n].row
        }
    }

    fn constituents(&self, c: usize) -> Vec<usize> {
        let n = self.g.n_checks();
        if c < n {
            vec![c]
        } else {
            self.synthesized[c - n].constituents.clone()
        }
    }

    /// Decomposes the connected subgraph on `bits` and `checks` (both sorted).
    fn region(&mut self, bits: Vec<usize>, checks: Vec<usize>) -> Result<Vec<Entry>> {
        let local = Induced::new(|c| self.row(c), bits, checks);
        let lg = &local.graph;
        let mut grower = Grower::new(lg, &SubgraphMask::full(lg));
        let mut out: Vec<Entry> = Vec::new();
        while let Some(growth) = grower.grow() {
            match dependency_of(lg, &growth) {
                None => {
                    let sub = Induced::of(lg, growth.core_bits.clone(), growth.core_checks.clone());
                    let tail = growth.tail.iter().map(|&c| sub.local_check(c).expect("tail in core")).collect();
                    let cand = StoppingSetCandidate {
                        mask: SubgraphMask::full(&sub.graph),
                        kind: StoppingSetKind::Genuine,
                        growth_order: Vec::new(),
                        tail,
                    };
                    let info = classify_any_fold(&sub.graph, &cand)?;
                    let bit_map: Vec<usize> = sub.bits.iter().map(|&b| local.bits[b]).collect();
                    let check_map: Vec<usize> = sub.checks.iter().map(|&c| local.checks[c]).collect();
                    out.push(Entry::from(Piece::StoppingSet(StoppingSetPiece {
                        bits: bit_map.clone(),
                        checks: check_map.clone(),
                        key_checks: info.key_checks.iter().map(|&c| check_map[c]).collect(),
                        reevaluated_bits: info.reevaluated_bits.iter().map(|&b| bit_map[b]).collect(),
                        residual: info.residual_pseudo_tree.relabel(&bit_map, &check_map),
                        key_functionals: info
                            .key_functionals
                            .iter()
                            .map(|f| f.iter().map(|&b| bit_map[b]).collect())
                            .collect(),
                        attached: Vec::new(),
                    })));
                    for &b in &growth.core_bits {
                        grower.remove_bit(b);
                    }
                    for &c in &growth.core_checks {
                        grower.remove_check(c);
                    }
                }
                Some(dep) => {
                    let dropped = *dep.iter().max().expect("dependency is non-empty");
                    let mut row = Vec::new();
                    let mut constituents = Vec::new();
                    for &c in &dep {
                        row = sym_diff(&row, self.row(local.checks[c]));
                        constituents = sym_diff(&constituents, &self.constituents(local.checks[c]));
                    }
                    grower.remove_check(dropped);
                    self.deleted.push(local.checks[dropped]);
                    let rest: Vec<usize> = dep.iter().copied().filter(|&c| c != dropped).collect();
                    if let Some(piece) = self.tree_piece_if_peelable(&local, &grower, &rest)? {
                        for &b in &piece.bits {
                            grower.remove_bit(local.bits.binary_search(&b).expect("local bit"));
                        }
                        for &c in &rest {
                            grower.remove_check(c);
                        }
                        out.push(Piece::Tree(piece).into());
                    }
                    self.place(row, constituents, &mut out)?;
                }
            }
        }
        let leftover_bits = grower.pool_bits();
        let leftover_checks = grower.pool_checks();
        if !leftover_bits.is_empty() || !leftover_checks.is_empty() {
            let rest = Induced::of(lg, leftover_bits, leftover_checks);
            for piece in residue_pieces(&rest)? {
                out.push(Piece::Tree(map_tree_piece(map_tree_piece(piece, &rest), &local)).into());
            }
        }
        Ok(out)
    }

    fn tree_piece_if_peelable(&self, local: &Induced, grower: &Grower, rest: &[usize]) -> Result<Option<TreePiece>> {
        if rest.is_empty() {
            return Ok(None);
        }
        let lg = &local.graph;
        let mut bits: Vec<usize> =
            rest.iter().flat_map(|&c| lg.check(c)).copied().filter(|&b| grower.in_pool_bit(b)).collect();
        bits.sort_unstable();
        bits.dedup();
        let sub = Induced::of(lg, bits, rest.to_vec());
        let full = SubgraphMask::full(&sub.graph);
        if !peel(&sub.graph, &full).is_empty() {
            return Ok(None);
        }
        let tree = build_pseudo_tree(&sub.graph, &full)?;
        let bit_map: Vec<usize> = sub.bits.iter().map(|&b| local.bits[b]).collect();
        let check_map: Vec<usize> = sub.checks.iter().map(|&c| local.checks[c]).collect();
        Ok(Some(TreePiece { tree: tree.relabel(&bit_map, &check_map), bits: bit_map, checks: check_map, attached: Vec::new() }))
    }

    /// Attaches the check with this row to the latest entry holding one of
    /// its bits. If that entry already implies it, the entry is merged into
    /// the one before and the check tried again.
    fn place(&mut self, row: Vec<usize>, constituents: Vec<usize>, out: &mut Vec<Entry>) -> Result<()> {
        let n = self.g.n_bits();
        loop {
            let Some(q) = out.iter().rposition(|e| row.iter().any(|&b| e.holds(b))) else {
                return Ok(());
            };
            if out[q].solver.is_none() {
                out[q].solver = Some(KeySolver::new(&out[q], n, |c| self.row(c))?);
            }
            let solver = out[q].solver.as_mut().expect("just built");
            let (f, combo) = solver.reduce(&row, |c| self.row(c));
            if !f.is_zero() {
                let solve_for = solver.pick(&f);
                let id = self.g.n_checks() + self.synthesized.len();
                solver.push(id, f, combo, solve_for);
                self.synthesized.push(SynthesizedCheck { id, constituents, row });
                out[q].attached.push(AttachedCheck { check: id, solve_for });
                return Ok(());
            }
            if q == 0 {
                // Nothing earlier: the check is implied outright.
                return Ok(());
            }
            let later = out.remove(q);
            let entry = &mut out[q - 1];
            if let Some(solver) = entry.solver.as_mut() {
                for p in &later.parts {
                    solver.extend(p, |c| self.row(c))?;
                }
                for a in &later.attached {
                    solver.add_forced(a.check, &[a.solve_for], |c| self.row(c))?;
                }
            }
            entry.parts.extend(later.parts);
            entry.attached.extend(later.attached);
        }
    }

    /// One piece per entry. Merged entries get a single tree; keys of every
    /// part after the first become attached checks.
    fn materialize(&self, e: Entry) -> Result<Piece> {
        let mut parts = e.parts.into_iter();
        let mut first = parts.next().expect("entries are non-empty");
        let rest: Vec<Piece> = parts.collect();
        let mut attached = Vec::new();
        for p in &rest {
            if let Piece::StoppingSet(s) = p {
                attached.extend(s.key_checks.iter().zip(&s.reevaluated_bits).map(|(&check, &solve_for)| AttachedCheck { check, solve_for }));
            }
        }
        attached.extend(e.attached);
        if !rest.is_empty() {
            let mut bits: Vec<usize> = first.bits().to_vec();
            let mut parents: Vec<(usize, usize)> = first.tree().parents().to_vec();
            for p in &rest {
                bits.extend(p.bits());
                parents.extend(p.tree().parents());
            }
            bits.sort_unstable();
            let mut tree_checks: Vec<usize> = parents.iter().map(|&(c, _)| c).collect();
            tree_checks.sort_unstable();
            let local = Induced::new(|c| self.row(c), bits.clone(), tree_checks);
            let local_parents: Vec<(usize, usize)> = parents
                .iter()
                .map(|&(c, b)| (local.local_check(c).expect("tree check"), local.bits.binary_search(&b).expect("piece bit")))
                .collect();
            let tree = PseudoTree::from_parents(&local.graph, &SubgraphMask::full(&local.graph), &local_parents)?
                .relabel(&local.bits, &local.checks);
            let mut checks: Vec<usize> = first.checks().to_vec();
            for p in &rest {
                checks.extend(p.checks());
            }
            checks.sort_unstable();
            first = match first {
                Piece::Tree(_) => Piece::Tree(TreePiece { bits, checks, tree, attached: Vec::new() }),
                Piece::StoppingSet(s) => Piece::StoppingSet(StoppingSetPiece { bits, checks, residual: tree, attached: Vec::new(), ..s }),
            };
        }
        for a in attached {
            first.attach(a);
        }
        Ok(first)
    }
}

/// Pseudo-tree pieces for a stopping-set-free remainder: one per connected
/// component with checks, plus one piece for all bits without checks.
fn residue_pieces(rest: &Induced) -> Result<Vec<TreePiece>> {
    let g = &rest.graph;
    let labels = component_labels(g, &SubgraphMask::full(g));
    let mut comps = vec![(Vec::new(), Vec::new()); labels.count];
    for (b, l) in labels.bit.iter().enumerate() {
        comps[l.expect("full mask")].0.push(b);
    }
    for (c, l) in labels.check.iter().enumerate() {
        comps[l.expect("full mask")].1.push(c);
    }
    let mut lonely = Vec::new();
    let mut out = Vec::new();
    for (bits, checks) in comps {
        if checks.is_empty() {
            lonely.extend(bits);
            continue;
        }
        let sub = Induced::of(g, bits, checks);
        let tree = build_pseudo_tree(&sub.graph, &SubgraphMask::full(&sub.graph))?;
        out.push(TreePiece { tree: tree.relabel(&sub.bits, &sub.checks), bits: sub.bits, checks: sub.checks, attached: Vec::new() });
    }
    if !lonely.is_empty() {
        lonely.sort_unstable();
        let sub = Induced::of(g, lonely, Vec::new());
        let tree = build_pseudo_tree(&sub.graph, &SubgraphMask::full(&sub.graph))?;
        out.push(TreePiece { tree: tree.relabel(&sub.bits, &sub.checks), bits: sub.bits, checks: sub.checks, attached: Vec::new() });
    }
    Ok(out)
}

fn map_tree_piece(p: TreePiece, local: &Induced) -> TreePiece {
    TreePiece {
        tree: p.tree.relabel(&local.bits, &local.checks),
        bits: p.bits.iter().map(|&b| local.bits[b]).collect(),
        checks: p.checks.iter().map(|&c| local.checks[c]).collect(),
        attached: Vec::new(),
    }
}

/// Assembles a plan from an explicit piece list, for reproducing a known
/// decomposition. Each piece owns the bits of its checks that no earlier
/// piece owns.
pub struct PlanBuilder<'g> {
    g: &'g TannerGraph,
    owned: Vec<bool>,
    used: Vec<bool>,
    pieces: Vec<Piece>,
    info_order: Option<Vec<usize>>,
}

impl<'g> PlanBuilder<'g> {
    pub fn new(g: &'g TannerGraph) -> Self {
        PlanBuilder { g, owned: vec![false; g.n_bits()], used: vec![false; g.n_checks()], pieces: Vec::new(), info_order: None }
    }

    fn claim(&mut self, checks: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut checks = checks.to_vec();
        checks.sort_unstable();
        let mut bits = Vec::new();
        for &c in &checks {
            if c >= self.g.n_checks() || std::mem::replace(&mut self.used[c], true) {
                return Err(Error::Usage(format!("check {c} is out of range or already used")));
            }
            bits.extend(self.g.check(c).iter().copied().filter(|&b| !self.owned[b]));
        }
        bits.sort_unstable();
        bits.dedup();
        for &b in &bits {
            self.owned[b] = true;
        }
        Ok((bits, checks))
    }

    /// A pseudo-tree piece with the given (check, parent) pairs.
    pub fn tree(mut self, checks: &[usize], parents: &[(usize, usize)]) -> Result<Self> {
        let (bits, checks) = self.claim(checks)?;
        let mask = SubgraphMask::from_nodes(self.g, &bits, &checks)?;
        let tree = PseudoTree::from_parents(self.g, &mask, parents)?;
        self.pieces.push(Piece::Tree(TreePiece { bits, checks, tree, attached: Vec::new() }));
        Ok(self)
    }

    /// A stopping-set piece. `parents` covers every non-key check.
    pub fn stopping_set(
        mut self,
        checks: &[usize],
        key_checks: &[usize],
        parents: &[(usize, usize)],
        reevaluated_bits: &[usize],
    ) -> Result<Self> {
        let (bits, checks) = self.claim(checks)?;
        let full = SubgraphMask::from_nodes(self.g, &bits, &checks)?;
        let mut residual = full.clone();
        for &k in key_checks {
            if !full.contains_check(k) {
                return Err(Error::Usage(format!("key check {k} is not in the piece")));
            }
            residual.set_check(k, false);
        }
        let tree = PseudoTree::from_parents(self.g, &residual, parents)?;
        let functionals = key_functionals(self.g, &full, &tree, key_checks);
        if !reevaluated_bits_valid(&functionals, reevaluated_bits) {
            return Err(Error::Structural(format!(
                "bits {reevaluated_bits:?} cannot be solved for from key checks {key_checks:?}"
            )));
        }
        self.pieces.push(Piece::StoppingSet(StoppingSetPiece {
            bits,
            checks,
            key_checks: key_checks.to_vec(),
            reevaluated_bits: reevaluated_bits.to_vec(),
            residual: tree,
            key_functionals: functionals,
            attached: Vec::new(),
        }));
        Ok(self)
    }

    /// Order in which input words fill the information bits.
    pub fn info_order(mut self, order: &[usize]) -> Self {
        self.info_order = Some(order.to_vec());
        self
    }

    pub fn build(self) -> Result<DecompositionPlan> {
        if let Some(c) = self.used.iter().position(|&u| !u) {
            return Err(Error::Usage(format!("check {c} is not in any piece")));
        }
        let mut pieces = self.pieces;
        let lonely: Vec<usize> = (0..self.g.n_bits()).filter(|&b| !self.owned[b]).collect();
        if !lonely.is_empty() {
            let mask = SubgraphMask::from_nodes(self.g, &lonely, &[])?;
            let tree = build_pseudo_tree(self.g, &mask)?;
            pieces.push(Piece::Tree(TreePiece { bits: lonely, checks: Vec::new(), tree, attached: Vec::new() }));
        }
        finish(self.g, pieces, Vec::new(), Vec::new(), self.info_order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::rank;
    use proptest::prelude::*;

    #[test]
    fn degree_four_bit_splits_into_two_clones() {
        let g = TannerGraph::from_rows(3, vec![vec![0, 1], vec![0, 2], vec![0, 1, 2], vec![0]]).unwrap();
        let (s, map) = split_high_degree(&g);
        assert_eq!(s.n_bits(), 4);
        assert_eq!(s.n_checks(), 5);
        assert_eq!(map.clones[&0], vec![3, 0]);
        // New clone takes the first two checks, the original keeps the rest.
        assert_eq!(s.bit(3), &[0, 1, 4]);
        assert_eq!(s.bit(0), &[2, 3, 4]);
        assert_eq!(s.check(4), &[0, 3]);
        assert!(s.max_bit_degree() <= 3);
    }

    #[test]
    fn degree_five_bit_gets_three_clones_and_two_aux_checks() {
        let g = TannerGraph::from_rows(2, vec![vec![0], vec![0, 1], vec![0], vec![0, 1], vec![0]]).unwrap();
        let (s, map) = split_high_degree(&g);
        assert_eq!(map.clones[&0].len(), 3);
        assert_eq!(map.aux_checks.len(), 2);
        let chain = &map.clones[&0];
        assert_eq!(s.bit(chain[0]).len(), 3);
        assert_eq!(s.bit(chain[1]), &[2, 5, 6]);
        assert_eq!(s.bit(chain[2]), &[3, 4, 6]);
    }

    #[test]
    fn split_is_identity_below_degree_four() {
        let g = TannerGraph::from_rows(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let (s, map) = split_high_degree(&g);
        assert_eq!(s, g);
        assert!(map.is_identity());
    }

    #[test]
    fn tree_graph_is_one_tree_piece() {
        let g = TannerGraph::from_rows(10, vec![vec![0, 1, 2, 3], vec![3, 4, 5, 6], vec![3, 7, 8, 9]]).unwrap();
        let p = decompose(&g).unwrap();
        assert_eq!(p.pieces.len(), 1);
        assert!(matches!(p.pieces[0], Piece::Tree(_)));
        assert_eq!(p.parity_bits.len(), 3);
        p.validate(&g).unwrap();
    }

    #[test]
    fn the_13_26_code_has_two_stopping_sets() {
        let g = crate::fixtures::code_13_26();
        let p = decompose(&g).unwrap();
        assert_eq!(p.validate(&g), Ok(()));
        assert_eq!(p.stopping_sets().count(), 2);
        assert_eq!(p.info_bits.len(), 13);
    }

    #[test]
    fn cycle_code_drops_one_redundant_check() {
        let g = TannerGraph::from_rows(5, vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 4], vec![4, 0]]).unwrap();
        let p = decompose(&g).unwrap();
        assert_eq!(p.deleted_checks, vec![4]);
        assert!(p.synthesized.is_empty());
        assert!(p.pieces.iter().all(|x| matches!(x, Piece::Tree(_))));
        assert_eq!(p.parity_bits.len(), 4);
        p.validate(&g).unwrap();
    }

    #[test]
    fn builder_rejects_unsolvable_reevaluated_bits() {
        let g = TannerGraph::from_rows(3, vec![vec![0, 1], vec![1, 2], vec![0, 1, 2]]).unwrap();
        // Residual {C0, C1} with parents x0, x2 leaves x1 free; C2 reduces to
        // x1, so x0 cannot be solved for.
        let bad = PlanBuilder::new(&g).stopping_set(&[0, 1, 2], &[2], &[(0, 0), (1, 2)], &[0]);
        assert!(bad.is_err());
        let good = PlanBuilder::new(&g).stopping_set(&[0, 1, 2], &[2], &[(0, 0), (1, 2)], &[1]).unwrap().build().unwrap();
        good.validate(&g).unwrap();
    }

    fn random_graph(max_deg: usize) -> impl Strategy<Value = TannerGraph> {
        (2usize..16, 1usize..10).prop_flat_map(move |(n, m)| {
            prop::collection::vec(prop::collection::btree_set(0..m, 0..=max_deg.min(m)), n).prop_filter_map(
                "no checks",
                move |cols| {
                    let mut rows = vec![Vec::new(); m];
                    for (b, col) in cols.iter().enumerate() {
                        for &c in col {
                            rows[c].push(b);
                        }
                    }
                    rows.retain(|r| !r.is_empty());
                    (!rows.is_empty()).then(|| TannerGraph::from_rows(n, rows).unwrap())
                },
            )
        })
    }

    fn satisfies(g: &TannerGraph, x: &[bool]) -> bool {
        (0..g.n_checks()).all(|c| g.check(c).iter().filter(|&&b| x[b]).count() % 2 == 0)
    }

    proptest! {
        #[test]
        fn plans_partition_bits_and_match_rank(g in random_graph(3)) {
            let p = decompose(&g).unwrap();
            prop_assert_eq!(p.validate(&g), Ok(()));
            prop_assert_eq!(p.parity_bits.len(), rank(&g.to_dense()));
        }

        #[test]
        fn split_plans_match_rank(g in random_graph(7)) {
            let (s, p) = plan(&g).unwrap();
            prop_assert_eq!(p.validate(&s), Ok(()));
            let aux = p.split.as_ref().map_or(0, |m| m.aux_checks.len());
            prop_assert_eq!(p.parity_bits.len() - aux, rank(&g.to_dense()));
        }

        #[test]
        fn split_preserves_the_code(g in random_graph(7)) {
            prop_assume!(g.n_bits() <= 12);
            let (s, map) = split_high_degree(&g);
            for word in 0u32..(1 << g.n_bits()) {
                let x: Vec<bool> = (0..g.n_bits()).map(|i| word >> i & 1 == 1).collect();
                prop_assert_eq!(satisfies(&g, &x), satisfies(&s, &map.expand(&x, s.n_bits())));
            }
        }
    }
}
