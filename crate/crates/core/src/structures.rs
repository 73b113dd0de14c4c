//! Pseudo-trees and encoding stopping sets.
//!
//! A pseudo-tree is a layered subgraph where every check has exactly one
//! parent bit directly above it, so parities can be filled in bottom-up. An
//! encoding stopping set is a closed subgraph in which every bit sees at
//! least two checks; it cannot be encoded by plain back-substitution and
//! needs a few key checks set aside first.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tanner::{Induced, SubgraphMask, TannerGraph};

/// Tiered view of a pseudo-tree. `tiers[0]` is the top tier; even positions
/// hold bits and odd positions hold checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoTree {
    tiers: Vec<Vec<usize>>,
    /// (check, parent bit), sorted by check.
    parents: Vec<(usize, usize)>,
}

impl PseudoTree {
    pub fn tiers(&self) -> &[Vec<usize>] {
        &self.tiers
    }

    /// Number of check tiers.
    pub fn depth(&self) -> usize {
        self.tiers.len() / 2
    }

    pub fn parents(&self) -> &[(usize, usize)] {
        &self.parents
    }

    pub fn parent_of(&self, check: usize) -> Option<usize> {
        self.parents.binary_search_by_key(&check, |&(c, _)| c).ok().map(|i| self.parents[i].1)
    }

    pub fn bits(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.tiers.iter().step_by(2).flatten().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn checks(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.tiers.iter().skip(1).step_by(2).flatten().copied().collect();
        v.sort_unstable();
        v
    }

    /// (check, parent) pairs in the order parities must be computed: deepest
    /// check tier first, ascending check index within a tier.
    pub fn computation_order(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.parents.len());
        for tier in self.tiers.iter().skip(1).step_by(2).rev() {
            for &c in tier {
                out.push((c, self.parent_of(c).expect("every check has a parent")));
            }
        }
        out
    }

    /// Tier index (0-based) of every bit and check in the tree.
    fn tier_of(&self, n_bits: usize, n_checks: usize) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
        let mut bt = vec![None; n_bits];
        let mut ct = vec![None; n_checks];
        for (t, tier) in self.tiers.iter().enumerate() {
            for &x in tier {
                if t % 2 == 0 {
                    bt[x] = Some(t);
                } else {
                    ct[x] = Some(t);
                }
            }
        }
        (bt, ct)
    }

    /// Rebuilds a tree with node ids mapped through `bit_map` / `check_map`.
    pub(crate) fn relabel(&self, bit_map: &[usize], check_map: &[usize]) -> PseudoTree {
        let tiers = self
            .tiers
            .iter()
            .enumerate()
            .map(|(t, tier)| {
                let map = if t % 2 == 0 { bit_map } else { check_map };
                let mut v: Vec<usize> = tier.iter().map(|&x| map[x]).collect();
                v.sort_unstable();
                v
            })
            .collect();
        let mut parents: Vec<(usize, usize)> =
            self.parents.iter().map(|&(c, b)| (check_map[c], bit_map[b])).collect();
        parents.sort_unstable();
        PseudoTree { tiers, parents }
    }

    /// Builds a tree from an explicit parent assignment. Checks are placed as
    /// high as their readers allow; bits that are no check's parent sit just
    /// below the lowest check that uses them.
    pub fn from_parents(g: &TannerGraph, s: &SubgraphMask, parents: &[(usize, usize)]) -> Result<PseudoTree> {
        let checks = s.checks();
        if parents.len() != checks.len() {
            return Err(Error::Structural(format!(
                "{} parents given for {} checks",
                parents.len(),
                checks.len()
            )));
        }
        let mut parent = vec![None; g.n_checks()];
        let mut child = vec![None; g.n_bits()];
        for &(c, b) in parents {
            if !s.contains_check(c) || !s.contains_bit(b) || !g.check(c).contains(&b) {
                return Err(Error::Structural(format!("bit {b} cannot be the parent of check {c}")));
            }
            if parent[c].replace(b).is_some() || child[b].replace(c).is_some() {
                return Err(Error::Structural(format!("parent assignment repeats check {c} or bit {b}")));
            }
        }
        // A check sits one tier below every check that reads its parent.
        // Kahn's algorithm over "reads the parent of" edges, from the top.
        let mut unread = vec![0usize; g.n_checks()];
        for &c in &checks {
            for &b in g.check(c) {
                if s.contains_bit(b) && Some(b) != parent[c] {
                    if let Some(d) = child[b] {
                        unread[d] += 1;
                    }
                }
            }
        }
        let mut level = vec![1usize; g.n_checks()];
        let mut ready: Vec<usize> = checks.iter().copied().filter(|&c| unread[c] == 0).collect();
        let mut done = 0;
        while let Some(c) = ready.pop() {
            done += 1;
            for &b in g.check(c) {
                if s.contains_bit(b) && Some(b) != parent[c] {
                    if let Some(d) = child[b] {
                        level[d] = level[d].max(level[c] + 1);
                        unread[d] -= 1;
                        if unread[d] == 0 {
                            ready.push(d);
                        }
                    }
                }
            }
        }
        if done != checks.len() {
            return Err(Error::Structural("parent assignment is cyclic".into()));
        }
        let p = checks.iter().map(|&c| level[c]).max().unwrap_or(0);
        let mut tiers = vec![Vec::new(); 2 * p + 1];
        for &c in &checks {
            let t = 2 * level[c] - 1;
            tiers[t].push(c);
            tiers[t - 1].push(parent[c].expect("checked above"));
        }
        for b in s.bits() {
            if child[b].is_some() {
                continue;
            }
            let below = g
                .bit(b)
                .iter()
                .filter(|&&c| s.contains_check(c))
                .map(|&c| 2 * level[c])
                .max()
                .unwrap_or(2 * p);
            tiers[below].push(b);
        }
        for t in &mut tiers {
            t.sort_unstable();
        }
        let mut parents = parents.to_vec();
        parents.sort_unstable();
        let tree = PseudoTree { tiers, parents };
        validate_pseudo_tree(g, s, &tree).map_err(Error::Structural)?;
        Ok(tree)
    }
}

/// Checks the tier layout and parent consistency from scratch. Only in-mask
/// neighbors count.
pub fn validate_pseudo_tree(g: &TannerGraph, s: &SubgraphMask, tree: &PseudoTree) -> std::result::Result<(), String> {
    let tiers = &tree.tiers;
    if tiers.len().is_multiple_of(2) {
        return Err(format!("{} tiers is not odd", tiers.len()));
    }
    let (bt, ct) = tree.tier_of(g.n_bits(), g.n_checks());
    let listed_bits: usize = tiers.iter().step_by(2).map(Vec::len).sum();
    let listed_checks: usize = tiers.iter().skip(1).step_by(2).map(Vec::len).sum();
    if listed_bits != s.n_bits_in() || listed_checks != s.n_checks_in() {
        return Err("tiers do not list every node exactly once".into());
    }
    if s.bits().iter().any(|&b| bt[b].is_none()) || s.checks().iter().any(|&c| ct[c].is_none()) {
        return Err("tiers do not match the mask".into());
    }
    let in_checks = |b: usize| g.bit(b).iter().copied().filter(|&c| s.contains_check(c));
    let in_bits = |c: usize| g.check(c).iter().copied().filter(|&b| s.contains_bit(b));
    if tiers.len() > 1 {
        for &b in &tiers[0] {
            let cs: Vec<usize> = in_checks(b).collect();
            if cs.len() != 1 || ct[cs[0]] != Some(1) {
                return Err(format!("top-tier bit {b} must have exactly one check, in tier 2"));
            }
        }
    }
    let mut seen_parent = BTreeSet::new();
    for (t, tier) in tiers.iter().enumerate().skip(1).step_by(2) {
        for &c in tier {
            let upper: Vec<usize> = in_bits(c).filter(|&b| bt[b].unwrap() < t).collect();
            if upper.len() != 1 || bt[upper[0]] != Some(t - 1) {
                return Err(format!("check {c} must have exactly one upper bit, in the tier directly above"));
            }
            if tree.parent_of(c) != Some(upper[0]) {
                return Err(format!("recorded parent of check {c} is not its upper bit {}", upper[0]));
            }
            if !seen_parent.insert(upper[0]) {
                return Err(format!("bit {} is the parent of two checks", upper[0]));
            }
        }
    }
    for (t, tier) in tiers.iter().enumerate().step_by(2).skip(1) {
        for &b in tier {
            let lower: Vec<usize> = in_checks(b).filter(|&c| ct[c].unwrap() > t).collect();
            if lower.len() > 1 || lower.iter().any(|&c| ct[c] != Some(t + 1)) {
                return Err(format!("bit {b} has lower checks outside the tier directly below"));
            }
        }
    }
    if tree.parents.len() != s.n_checks_in() {
        return Err("parent table size differs from the number of checks".into());
    }
    Ok(())
}

/// Peeling order: the (check, private bit) pairs removed, in removal order.
/// Each private bit appears in no check removed later.
pub(crate) struct Peeled {
    pub core: SubgraphMask,
    pub order: Vec<(usize, usize)>,
}

pub(crate) fn peel_with_order(g: &TannerGraph, s: &SubgraphMask) -> Peeled {
    let mut core = s.clone();
    let mut deg = vec![0usize; g.n_bits()];
    let mut queue = Vec::new();
    for b in s.bits() {
        deg[b] = g.bit(b).iter().filter(|&&c| s.contains_check(c)).count();
        if deg[b] <= 1 {
            queue.push(b);
        }
    }
    // Ascending pops keep the removal order deterministic.
    queue.reverse();
    let mut order = Vec::new();
    while let Some(b) = queue.pop() {
        if !core.contains_bit(b) {
            continue;
        }
        core.set_bit(b, false);
        if deg[b] == 0 {
            continue;
        }
        let c = *g.bit(b).iter().find(|&&c| core.contains_check(c)).expect("degree one");
        core.set_check(c, false);
        order.push((c, b));
        for &x in g.check(c) {
            if core.contains_bit(x) {
                deg[x] -= 1;
                if deg[x] <= 1 {
                    queue.push(x);
                }
            }
        }
    }
    Peeled { core, order }
}

/// Repeatedly strips bits of in-mask degree at most one (with their check)
/// and returns what is left.
pub fn peel(g: &TannerGraph, s: &SubgraphMask) -> SubgraphMask {
    peel_with_order(g, s).core
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoppingSetKind {
    /// Closed and 2-connected on bits, but its rows are dependent.
    Pseudo,
    /// A true encoding stopping set: rows independent.
    Genuine,
}

#[derive(Clone, Debug)]
pub struct StoppingSetCandidate {
    /// For a genuine set, the peeled residue. For a pseudo set, the
    /// dependent checks and their in-pool bits.
    pub mask: SubgraphMask,
    pub kind: StoppingSetKind,
    /// Checks in the order growth added them.
    pub growth_order: Vec<usize>,
    /// Zero-outsider checks added after the last check that brought in new
    /// bits, restricted to the residue, in growth order.
    pub tail: Vec<usize>,
}

/// Greedy growth from a minimum-degree check. Returns `None` when the pool
/// holds no stopping set.
pub fn find_stopping_set(g: &TannerGraph, pool: &SubgraphMask) -> Result<Option<StoppingSetCandidate>> {
    if !pool.fits(g) {
        return Err(Error::Usage("pool mask does not match the graph".into()));
    }
    if let Some(b) = pool
        .bits()
        .into_iter()
        .find(|&b| g.bit(b).iter().filter(|&&c| pool.contains_check(c)).count() > 3)
    {
        return Err(Error::Usage(format!("bit {b} has in-pool degree above 3")));
    }
    Ok(find_stopping_set_unchecked(g, pool))
}

/// [`find_stopping_set`] without the degree precondition.
pub(crate) fn find_stopping_set_unchecked(g: &TannerGraph, pool: &SubgraphMask) -> Option<StoppingSetCandidate> {
    let growth = Grower::new(g, pool).grow()?;
    let core = SubgraphMask::from_nodes(g, &growth.core_bits, &growth.core_checks).expect("ids come from g");
    Some(match dependency_of(g, &growth) {
        Some(d) => StoppingSetCandidate {
            mask: closure_in(g, &core, &d),
            kind: StoppingSetKind::Pseudo,
            growth_order: growth.order,
            tail: growth.tail,
        },
        None => StoppingSetCandidate {
            mask: core,
            kind: StoppingSetKind::Genuine,
            growth_order: growth.order,
            tail: growth.tail,
        },
    })
}

/// Result of one growth round, in the ids of the graph it ran on.
#[derive(Clone, Debug)]
pub(crate) struct Growth {
    pub core_checks: Vec<usize>,
    /// In-pool bits of the core checks.
    pub core_bits: Vec<usize>,
    pub order: Vec<usize>,
    pub tail: Vec<usize>,
}

/// Pool state for repeated growth rounds. Outsider counts and the priority
/// queue describe an empty `S`; a round mutates them and rolls back, and
/// removals from the pool update them incrementally, so a round costs time
/// proportional to what it touches.
pub(crate) struct Grower<'g> {
    g: &'g TannerGraph,
    pool_bit: Vec<bool>,
    pool_check: Vec<bool>,
    outsiders: Vec<usize>,
    queue: BTreeSet<(usize, usize)>,
    s_bit: Vec<bool>,
    s_check: Vec<bool>,
    saved: Vec<Option<usize>>,
    deg: Vec<usize>,
    alive: Vec<bool>,
}

impl<'g> Grower<'g> {
    pub fn new(g: &'g TannerGraph, pool: &SubgraphMask) -> Self {
        let pool_bit: Vec<bool> = (0..g.n_bits()).map(|b| pool.contains_bit(b)).collect();
        let pool_check: Vec<bool> = (0..g.n_checks()).map(|c| pool.contains_check(c)).collect();
        let mut outsiders = vec![0; g.n_checks()];
        let mut queue = BTreeSet::new();
        for c in (0..g.n_checks()).filter(|&c| pool_check[c]) {
            outsiders[c] = g.check(c).iter().filter(|&&b| pool_bit[b]).count();
            queue.insert((outsiders[c], c));
        }
        Grower {
            g,
            pool_bit,
            pool_check,
            outsiders,
            queue,
            s_bit: vec![false; g.n_bits()],
            s_check: vec![false; g.n_checks()],
            saved: vec![None; g.n_checks()],
            deg: vec![0; g.n_bits()],
            alive: vec![false; g.n_checks()],
        }
    }

    pub fn pool_bits(&self) -> Vec<usize> {
        (0..self.g.n_bits()).filter(|&b| self.pool_bit[b]).collect()
    }

    pub fn pool_checks(&self) -> Vec<usize> {
        (0..self.g.n_checks()).filter(|&c| self.pool_check[c]).collect()
    }

    pub fn in_pool_bit(&self, b: usize) -> bool {
        self.pool_bit[b]
    }

    pub fn remove_check(&mut self, c: usize) {
        if std::mem::replace(&mut self.pool_check[c], false) {
            self.queue.remove(&(self.outsiders[c], c));
        }
    }

    pub fn remove_bit(&mut self, b: usize) {
        if !std::mem::replace(&mut self.pool_bit[b], false) {
            return;
        }
        for &c in self.g.bit(b) {
            if self.pool_check[c] {
                self.queue.remove(&(self.outsiders[c], c));
                self.outsiders[c] -= 1;
                self.queue.insert((self.outsiders[c], c));
            }
        }
    }

    pub fn grow(&mut self) -> Option<Growth> {
        let g = self.g;
        let mut order = Vec::new();
        let mut s_bits = Vec::new();
        let mut touched = Vec::new();
        let mut last_intro = None;
        let mut detected = false;
        while let Some(&(k, c)) = self.queue.iter().next() {
            if detected && k > 0 {
                break;
            }
            self.queue.remove(&(k, c));
            self.s_check[c] = true;
            order.push(c);
            if k > 0 {
                last_intro = Some(order.len() - 1);
                for &b in g.check(c) {
                    if !self.pool_bit[b] || self.s_bit[b] {
                        continue;
                    }
                    self.s_bit[b] = true;
                    s_bits.push(b);
                    for &d in g.bit(b) {
                        if self.pool_check[d] && !self.s_check[d] {
                            if self.saved[d].is_none() {
                                self.saved[d] = Some(self.outsiders[d]);
                                touched.push(d);
                            }
                            self.queue.remove(&(self.outsiders[d], d));
                            self.outsiders[d] -= 1;
                            self.queue.insert((self.outsiders[d], d));
                        }
                    }
                }
            } else if !detected && !self.core_of(&order).is_empty() {
                detected = true;
            }
        }
        let result = detected.then(|| {
            let mut core_checks = self.core_of(&order);
            core_checks.sort_unstable();
            let mut core_bits: Vec<usize> =
                core_checks.iter().flat_map(|&c| g.check(c)).copied().filter(|&b| self.pool_bit[b]).collect();
            core_bits.sort_unstable();
            core_bits.dedup();
            let from = last_intro.map_or(0, |i| i + 1);
            let tail = order[from..].iter().copied().filter(|c| core_checks.binary_search(c).is_ok()).collect();
            Growth { core_checks, core_bits, order: order.clone(), tail }
        });
        // Roll back to the empty-S state.
        for d in touched {
            let orig = self.saved[d].take().expect("saved on first touch");
            if !self.s_check[d] {
                self.queue.remove(&(self.outsiders[d], d));
                self.queue.insert((orig, d));
            }
            self.outsiders[d] = orig;
        }
        for &c in &order {
            self.s_check[c] = false;
            self.queue.insert((self.outsiders[c], c));
        }
        for b in s_bits {
            self.s_bit[b] = false;
        }
        result
    }

    /// Checks of the 2-core of `checks` restricted to pool bits.
    fn core_of(&mut self, checks: &[usize]) -> Vec<usize> {
        let g = self.g;
        let mut bits = Vec::new();
        for &c in checks {
            self.alive[c] = true;
            for &b in g.check(c) {
                if self.pool_bit[b] {
                    if self.deg[b] == 0 {
                        bits.push(b);
                    }
                    self.deg[b] += 1;
                }
            }
        }
        let mut stack: Vec<usize> = bits.iter().copied().filter(|&b| self.deg[b] == 1).collect();
        while let Some(b) = stack.pop() {
            if self.deg[b] != 1 {
                continue;
            }
            let c = *g.bit(b).iter().find(|&&c| self.alive[c]).expect("degree one");
            self.alive[c] = false;
            for &x in g.check(c) {
                if self.pool_bit[x] {
                    self.deg[x] -= 1;
                    if self.deg[x] == 1 {
                        stack.push(x);
                    }
                }
            }
        }
        let core = checks.iter().copied().filter(|&c| self.alive[c]).collect();
        for &c in checks {
            self.alive[c] = false;
        }
        for b in bits {
            self.deg[b] = 0;
        }
        core
    }
}

/// Looks for a linear dependency among the core rows of a growth round.
/// Returns the dependent checks, or `None` when the core is genuine.
pub(crate) fn dependency_of(g: &TannerGraph, growth: &Growth) -> Option<Vec<usize>> {
    let sub = Induced::of(g, growth.core_bits.clone(), growth.core_checks.clone());
    let full = SubgraphMask::full(&sub.graph);
    let tail: Vec<usize> = growth.tail.iter().map(|&c| sub.local_check(c).expect("tail lies in core")).collect();
    let mut residual = full.clone();
    for &t in &tail {
        residual.set_check(t, false);
    }
    let peeled = peel_with_order(&sub.graph, &residual);
    let dep = if peeled.core.n_checks_in() == 0 {
        tail_dependency(&sub.graph, &full, &peeled.order, &tail)
    } else {
        // Only reachable if growth missed an earlier core; stay correct anyway.
        dense_dependency(&sub.graph, &full)
    };
    dep.map(|d| d.into_iter().map(|c| sub.checks[c]).collect())
}

fn closure_in(g: &TannerGraph, within: &SubgraphMask, checks: &[usize]) -> SubgraphMask {
    let mut m = SubgraphMask::empty(g);
    for &c in checks {
        m.set_check(c, true);
        for &b in g.check(c) {
            if within.contains_bit(b) {
                m.set_bit(b, true);
            }
        }
    }
    m
}

/// Symmetric difference of two sorted lists.
pub(crate) fn sym_diff(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Reduces one row by back-substitution through `order` (checks with their
/// private bits, in peel order). Returns the remaining support and the
/// checks used, both sorted.
fn reduce_row(g: &TannerGraph, mask: &SubgraphMask, start: usize, order: &[(usize, usize)], scratch: &mut [bool]) -> (Vec<usize>, Vec<usize>) {
    let mut touched: Vec<usize> = Vec::new();
    let toggle = |b: usize, scratch: &mut [bool], touched: &mut Vec<usize>| {
        scratch[b] = !scratch[b];
        touched.push(b);
    };
    for &b in g.check(start) {
        if mask.contains_bit(b) {
            toggle(b, scratch, &mut touched);
        }
    }
    let mut used = Vec::new();
    for &(c, p) in order {
        if scratch[p] {
            used.push(c);
            for &b in g.check(c) {
                if mask.contains_bit(b) {
                    toggle(b, scratch, &mut touched);
                }
            }
        }
    }
    touched.sort_unstable();
    touched.dedup();
    let support: Vec<usize> = touched.iter().copied().filter(|&b| scratch[b]).collect();
    for b in touched {
        scratch[b] = false;
    }
    used.sort_unstable();
    (support, used)
}

/// Expresses each tail check over the residual's free bits and looks for a
/// linear dependency among them. Returns the dependent check set, if any.
fn tail_dependency(g: &TannerGraph, core: &SubgraphMask, order: &[(usize, usize)], tail: &[usize]) -> Option<Vec<usize>> {
    let mut scratch = vec![false; g.n_bits()];
    let mut rows: Vec<(Vec<usize>, Vec<usize>)> = tail
        .iter()
        .map(|&t| {
            let (support, used) = reduce_row(g, core, t, order, &mut scratch);
            (support, sym_diff(&used, &[t]))
        })
        .collect();
    eliminate(&mut rows)
}

/// Gaussian elimination on sparse rows carrying their combination sets.
/// Returns the combination of the first row that reduces to zero.
fn eliminate(rows: &mut [(Vec<usize>, Vec<usize>)]) -> Option<Vec<usize>> {
    let mut pivots: Vec<(usize, usize)> = Vec::new(); // (pivot bit, row index)
    for i in 0..rows.len() {
        loop {
            let Some(&lead) = rows[i].0.first() else {
                return Some(rows[i].1.clone());
            };
            match pivots.iter().find(|&&(p, _)| p == lead) {
                Some(&(_, j)) => {
                    let (s, c) = (rows[j].0.clone(), rows[j].1.clone());
                    rows[i].0 = sym_diff(&rows[i].0, &s);
                    rows[i].1 = sym_diff(&rows[i].1, &c);
                }
                None => {
                    pivots.push((lead, i));
                    break;
                }
            }
        }
    }
    None
}

fn dense_dependency(g: &TannerGraph, core: &SubgraphMask) -> Option<Vec<usize>> {
    let mut rows: Vec<(Vec<usize>, Vec<usize>)> = core
        .checks()
        .into_iter()
        .map(|c| (g.check(c).iter().copied().filter(|&b| core.contains_bit(b)).collect(), vec![c]))
        .collect();
    eliminate(&mut rows)
}

/// A classified genuine encoding stopping set.
#[derive(Clone, Debug)]
pub struct StoppingSetInfo {
    pub mask: SubgraphMask,
    pub fold: usize,
    pub key_checks: Vec<usize>,
    pub reevaluated_bits: Vec<usize>,
    pub residual_pseudo_tree: PseudoTree,
    /// Each key check rewritten over the residual's information bits.
    pub key_functionals: Vec<Vec<usize>>,
}

/// Picks the key checks of a genuine set, builds the residual pseudo-tree
/// and chooses reevaluated bits.
pub fn classify_fold(g: &TannerGraph, cand: &StoppingSetCandidate) -> Result<StoppingSetInfo> {
    let info = classify_any_fold(g, cand)?;
    let max_deg = cand
        .mask
        .bits()
        .into_iter()
        .map(|b| g.bit(b).iter().filter(|&&c| cand.mask.contains_check(c)).count())
        .max()
        .unwrap_or(0);
    if info.fold > 2 && max_deg <= 3 {
        return Err(Error::Structural(format!(
            "stopping set with key checks {:?} needs fold {} under max degree 3",
            info.key_checks, info.fold
        )));
    }
    Ok(info)
}

/// Same as [`classify_fold`] without the fold limit. Regions that received a
/// synthesized check can exceed degree 3 and need more key checks.
pub(crate) fn classify_any_fold(g: &TannerGraph, cand: &StoppingSetCandidate) -> Result<StoppingSetInfo> {
    if cand.kind != StoppingSetKind::Genuine {
        return Err(Error::Usage("classify_fold needs a genuine stopping set".into()));
    }
    let mut keys = cand.tail.clone();
    if keys.is_empty() {
        return Err(Error::Structural("stopping set without zero-outsider checks".into()));
    }
    let without = |keys: &[usize]| {
        let mut m = cand.mask.clone();
        for &k in keys {
            m.set_check(k, false);
        }
        m
    };
    if keys.len() >= 2 {
        let last = *keys.last().unwrap();
        if peel(g, &without(&[last])).is_empty() {
            keys = vec![last];
        }
    }
    let residual = without(&keys);
    if !peel(g, &residual).is_empty() {
        return Err(Error::Structural(format!("removing key checks {keys:?} leaves a stopping set")));
    }
    let tree = build_pseudo_tree(g, &residual)?;
    let functionals = key_functionals(g, &cand.mask, &tree, &keys);
    let reevaluated = find_reevaluated_bits(&functionals)?;
    Ok(StoppingSetInfo {
        mask: cand.mask.clone(),
        fold: keys.len(),
        key_checks: keys,
        reevaluated_bits: reevaluated,
        residual_pseudo_tree: tree,
        key_functionals: functionals,
    })
}

/// Rewrites each key check over the information bits of `tree` by
/// substituting every parity with its defining check.
pub fn key_functionals(g: &TannerGraph, mask: &SubgraphMask, tree: &PseudoTree, keys: &[usize]) -> Vec<Vec<usize>> {
    let mut order = tree.computation_order();
    order.reverse();
    let mut scratch = vec![false; g.n_bits()];
    keys.iter().map(|&k| reduce_row(g, mask, k, &order, &mut scratch).0).collect()
}

/// Chooses the bits the key checks will solve for.
///
/// `sets[i]` is key check `i` written over information bits, ascending.
/// One key: its first bit. Two keys: the lowest bit of the first set missing
/// from the second paired with the highest bit of the second; failing that,
/// the highest bit of the first paired with the lowest bit of the second
/// missing from the first. More keys: pivots of a Gaussian elimination.
pub fn find_reevaluated_bits(sets: &[Vec<usize>]) -> Result<Vec<usize>> {
    let none = || Error::Structural("key checks admit no reevaluated bits".into());
    match sets {
        [] => Err(Error::Usage("no key checks".into())),
        [a] => a.first().map(|&x| vec![x]).ok_or_else(none),
        [a, b] => {
            if let Some(&g) = a.iter().find(|x| b.binary_search(x).is_err()) {
                let d = *b.last().ok_or_else(none)?;
                Ok(vec![g, d])
            } else {
                let g = *a.last().ok_or_else(none)?;
                let d = *b.iter().find(|x| a.binary_search(x).is_err()).ok_or_else(none)?;
                Ok(vec![g, d])
            }
        }
        _ => {
            let mut rows: Vec<(Vec<usize>, Vec<usize>)> =
                sets.iter().enumerate().map(|(i, s)| (s.clone(), vec![i])).collect();
            let mut picked = Vec::new();
            for i in 0..rows.len() {
                for j in 0..i {
                    let p = picked[j];
                    if rows[i].0.binary_search(&p).is_ok() {
                        let (s, c) = rows[j].clone();
                        rows[i].0 = sym_diff(&rows[i].0, &s);
                        rows[i].1 = sym_diff(&rows[i].1, &c);
                    }
                }
                picked.push(*rows[i].0.first().ok_or_else(none)?);
            }
            Ok(picked)
        }
    }
}

/// True when `bits` can be solved for from the key functionals, i.e. the
/// square submatrix they select is invertible.
pub fn reevaluated_bits_valid(sets: &[Vec<usize>], bits: &[usize]) -> bool {
    if sets.len() != bits.len() {
        return false;
    }
    let k = bits.len();
    let mut m: Vec<Vec<bool>> = sets.iter().map(|s| bits.iter().map(|b| s.binary_search(b).is_ok()).collect()).collect();
    for col in 0..k {
        let Some(piv) = (col..k).find(|&r| m[r][col]) else {
            return false;
        };
        m.swap(col, piv);
        for r in 0..k {
            if r != col && m[r][col] {
                let src = m[col].clone();
                for (x, y) in m[r].iter_mut().zip(src) {
                    *x ^= y;
                }
            }
        }
    }
    true
}

/// Layers a stopping-set-free subgraph into a pseudo-tree.
///
/// Each round takes the bits left with at most one remaining check, puts the
/// checks they touch in the next tier, keeps the lowest-index candidate of
/// each such check as its parent and pushes the other candidates one bit
/// tier down. Bits that never had a check go to the bottom tier.
pub fn build_pseudo_tree(g: &TannerGraph, s: &SubgraphMask) -> Result<PseudoTree> {
    let mut deg = vec![0usize; g.n_bits()];
    let mut placed = vec![false; g.n_bits()];
    let mut isolated = Vec::new();
    let mut unplaced = Vec::new();
    for b in s.bits() {
        deg[b] = g.bit(b).iter().filter(|&&c| s.contains_check(c)).count();
        if deg[b] == 0 {
            isolated.push(b);
            placed[b] = true;
        } else {
            unplaced.push(b);
        }
    }
    let mut remaining = s.clone();
    let mut n_remaining = s.n_checks_in();
    let mut tiers: Vec<Vec<usize>> = Vec::new();
    let mut parents = Vec::new();
    let mut dragged: Vec<usize> = Vec::new();
    let mut has_parent = vec![false; g.n_checks()];
    let mut first = true;
    while n_remaining > 0 {
        let mut bit_tier = std::mem::take(&mut dragged);
        let mut candidates = Vec::new();
        for &b in &unplaced {
            if placed[b] {
                continue;
            }
            if deg[b] == 1 || (deg[b] == 0 && !first) {
                placed[b] = true;
                if deg[b] == 1 {
                    candidates.push(b);
                } else {
                    bit_tier.push(b);
                }
            }
        }
        if candidates.is_empty() {
            return Err(Error::Structural(format!(
                "{n_remaining} checks remain but no bit has a single remaining check; the subgraph contains a stopping set"
            )));
        }
        let mut check_tier = Vec::new();
        for &b in &candidates {
            let c = *g.bit(b).iter().find(|&&c| remaining.contains_check(c)).expect("degree one");
            // `candidates` is ascending, so the first visitor becomes the parent.
            if has_parent[c] {
                dragged.push(b);
            } else {
                has_parent[c] = true;
                check_tier.push(c);
                parents.push((c, b));
                bit_tier.push(b);
            }
        }
        for &c in &check_tier {
            remaining.set_check(c, false);
            n_remaining -= 1;
            for &b in g.check(c) {
                if s.contains_bit(b) && !placed[b] {
                    deg[b] -= 1;
                }
            }
        }
        bit_tier.sort_unstable();
        check_tier.sort_unstable();
        tiers.push(bit_tier);
        tiers.push(check_tier);
        first = false;
    }
    let mut bottom = dragged;
    bottom.extend(unplaced.iter().copied().filter(|&b| !placed[b]));
    bottom.extend(isolated);
    bottom.sort_unstable();
    tiers.push(bottom);
    parents.sort_unstable();
    let tree = PseudoTree { tiers, parents };
    validate_pseudo_tree(g, s, &tree).map_err(Error::Structural)?;
    Ok(tree)
}
