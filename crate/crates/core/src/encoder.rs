//! Compiling a [`DecompositionPlan`] into a flat schedule of XOR steps, and
//! running it.
//!
//! A schedule works on the (possibly split) graph's bits plus a handful of
//! scratch slots. Slots hold partial parities that are needed more than once:
//! the part of a check lying in pieces before some point, the value of a
//! synthesized check, and key check values.

use std::collections::{BTreeMap, HashMap};

use crate::decompose::{plan, DecompositionPlan, Piece, StoppingSetPiece, TreeIndex};
use crate::error::{Error, Result};
use crate::gf2::BitWord;
use crate::structures::sym_diff;
use crate::tanner::TannerGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Bit(usize),
    Slot(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    /// Recompute every parity touched by a corrected bit.
    Recompute,
    /// Flip precomputed bit lists instead.
    #[default]
    Flip,
}

/// How the two reevaluated bits `[γ, δ]` sit in the two key checks `[α, β]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairCase {
    /// γ is in both keys, δ only in β.
    GammaInBoth,
    /// δ is in both keys, γ only in α.
    DeltaInBoth,
    /// γ only in α, δ only in β.
    Disjoint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    /// Clears bits that are read before they are solved for.
    Zero { bits: Vec<usize> },
    ComputeParity { target: usize, sources: Vec<Operand> },
    /// Part of an original check lying in earlier pieces.
    EvalRhs { slot: usize, sources: Vec<Operand> },
    /// XOR of other slots: a synthesized check from its constituents, or a
    /// partial sum shared by several rows of a correction.
    CombineSlots { slot: usize, sources: Vec<usize> },
    /// Syndrome of a key check with the reevaluated bits still zero.
    EvalKeyCheck { slot: usize, sources: Vec<Operand> },
    CorrectSingle { key: usize, target: usize },
    CorrectPair { case: PairCase, keys: [usize; 2], targets: [usize; 2] },
    /// `targets[j] = XOR of keys[i] for i in inverse[j]`, for three or more keys.
    CorrectGeneral { keys: Vec<usize>, targets: Vec<usize>, inverse: Vec<Vec<usize>> },
    /// Recomputes `target` if any guard bit is set.
    Recompute { guard: Vec<usize>, target: usize, sources: Vec<Operand> },
    /// Flips `bits` if the XOR of the condition bits is one.
    FlipList { condition: Vec<usize>, bits: Vec<usize> },
}

impl Step {
    /// XORs spent when the step runs. Flips themselves are counted apart.
    pub fn xor_cost(&self) -> usize {
        match self {
            Step::Zero { .. } | Step::CorrectSingle { .. } => 0,
            Step::ComputeParity { sources, .. }
            | Step::EvalRhs { sources, .. }
            | Step::EvalKeyCheck { sources, .. }
            | Step::Recompute { sources, .. } => sources.len().saturating_sub(1),
            Step::CombineSlots { sources, .. } => sources.len().saturating_sub(1),
            Step::CorrectPair { case, .. } => usize::from(*case != PairCase::Disjoint),
            Step::CorrectGeneral { inverse, .. } => inverse.iter().map(|r| r.len().saturating_sub(1)).sum(),
            Step::FlipList { condition, .. } => condition.len().saturating_sub(1),
        }
    }
}

/// Corrections `(Δx_γ, Δx_δ)` that satisfy both key checks given their
/// syndromes.
pub fn solve_correction(case: PairCase, c_alpha: bool, c_beta: bool) -> (bool, bool) {
    match case {
        PairCase::GammaInBoth => (c_alpha, c_alpha ^ c_beta),
        PairCase::DeltaInBoth => (c_alpha ^ c_beta, c_beta),
        PairCase::Disjoint => (c_alpha, c_beta),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    /// Codeword length (bits of the unsplit graph).
    pub n_bits: usize,
    /// Bits the schedule works on, clones included.
    pub n_work_bits: usize,
    pub n_slots: usize,
    /// Work bits receiving the information word, in input order.
    pub info_positions: Vec<usize>,
    /// Original bit of each clone, for work bits `n_bits..`.
    pub clone_origin: Vec<usize>,
    pub steps: Vec<Step>,
    pub xor_budget: u64,
    pub mode: Mode,
    /// Digest of the graph the schedule was compiled for.
    pub graph_digest: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodeReport {
    pub codeword: BitWord,
    pub xor_count: u64,
    pub flip_ops: u64,
}

/// Reusable per-thread buffers for [`Schedule::encode_with`].
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    bits: Vec<bool>,
    slots: Vec<bool>,
}

impl Schedule {
    pub fn n_info(&self) -> usize {
        self.info_positions.len()
    }

    /// Codeword positions that carry the information word unchanged.
    pub fn systematic_positions(&self) -> Vec<usize> {
        self.info_positions
            .iter()
            .map(|&b| if b < self.n_bits { b } else { self.clone_origin[b - self.n_bits] })
            .collect()
    }

    /// XORs of one run with no data-dependent step taken. Exact in flip mode.
    pub fn static_xor_count(&self) -> u64 {
        self.steps.iter().filter(|s| !matches!(s, Step::Recompute { .. })).map(|s| s.xor_cost() as u64).sum()
    }

    pub fn encode(&self, info: &BitWord) -> Result<EncodeReport> {
        self.encode_with(info, &mut Scratch::default())
    }

    pub fn encode_with(&self, info: &BitWord, scratch: &mut Scratch) -> Result<EncodeReport> {
        if info.len() != self.n_info() {
            return Err(Error::Usage(format!("information word has {} bits, expected {}", info.len(), self.n_info())));
        }
        let Scratch { bits: x, slots } = scratch;
        x.clear();
        x.resize(self.n_work_bits, false);
        slots.clear();
        slots.resize(self.n_slots, false);
        for (i, &p) in self.info_positions.iter().enumerate() {
            x[p] = info.get(i);
        }
        let mut xor_count = 0u64;
        let mut flip_ops = 0u64;
        let eval = |x: &[bool], slots: &[bool], ops: &[Operand]| {
            ops.iter().fold(false, |acc, op| {
                acc ^ match *op {
                    Operand::Bit(b) => x[b],
                    Operand::Slot(s) => slots[s],
                }
            })
        };
        for step in &self.steps {
            match step {
                Step::Zero { bits } => {
                    for &b in bits {
                        x[b] = false;
                    }
                }
                Step::ComputeParity { target, sources } => x[*target] = eval(x, slots, sources),
                Step::EvalRhs { slot, sources } | Step::EvalKeyCheck { slot, sources } => {
                    slots[*slot] = eval(x, slots, sources)
                }
                Step::CombineSlots { slot, sources } => slots[*slot] = sources.iter().fold(false, |a, &s| a ^ slots[s]),
                Step::CorrectSingle { key, target } => x[*target] ^= slots[*key],
                Step::CorrectPair { case, keys, targets } => {
                    let (dg, dd) = solve_correction(*case, slots[keys[0]], slots[keys[1]]);
                    x[targets[0]] ^= dg;
                    x[targets[1]] ^= dd;
                }
                Step::CorrectGeneral { keys, targets, inverse } => {
                    for (t, row) in targets.iter().zip(inverse) {
                        x[*t] ^= row.iter().fold(false, |a, &i| a ^ slots[keys[i]]);
                    }
                }
                Step::Recompute { guard, target, sources } => {
                    if guard.iter().any(|&b| x[b]) {
                        x[*target] = eval(x, slots, sources);
                        xor_count += step.xor_cost() as u64;
                    }
                    continue;
                }
                Step::FlipList { condition, bits } => {
                    if condition.iter().fold(false, |a, &b| a ^ x[b]) {
                        for &b in bits {
                            x[b] ^= true;
                        }
                        flip_ops += 1;
                    }
                }
            }
            xor_count += step.xor_cost() as u64;
        }
        Ok(EncodeReport { codeword: BitWord::from_bools(&x[..self.n_bits]), xor_count, flip_ops })
    }

    /// Checks that every step reads only values already determined and that
    /// every work bit ends up determined.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut bit = vec![false; self.n_work_bits];
        let mut slot = vec![false; self.n_slots];
        if self.clone_origin.len() + self.n_bits != self.n_work_bits {
            return Err("clone table does not match the bit counts".into());
        }
        for &p in &self.info_positions {
            if p >= self.n_work_bits || std::mem::replace(&mut bit[p], true) {
                return Err(format!("bad information position {p}"));
            }
        }
        let read_bit = |bit: &[bool], b: usize, i: usize| -> std::result::Result<(), String> {
            match bit.get(b) {
                Some(true) => Ok(()),
                Some(false) => Err(format!("step {i} reads bit {b} before it is set")),
                None => Err(format!("step {i} reads bit {b} out of range")),
            }
        };
        let read_slot = |slot: &[bool], s: usize, i: usize| -> std::result::Result<(), String> {
            match slot.get(s) {
                Some(true) => Ok(()),
                _ => Err(format!("step {i} reads slot {s} before it is set")),
            }
        };
        let read_ops = |bit: &[bool], slot: &[bool], ops: &[Operand], i: usize| {
            ops.iter().try_for_each(|op| match *op {
                Operand::Bit(b) => read_bit(bit, b, i),
                Operand::Slot(s) => read_slot(slot, s, i),
            })
        };
        let write = |v: &mut [bool], b: usize, i: usize| -> std::result::Result<(), String> {
            match v.get_mut(b) {
                Some(w) => {
                    *w = true;
                    Ok(())
                }
                None => Err(format!("step {i} writes {b} out of range")),
            }
        };
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                Step::Zero { bits } => bits.iter().try_for_each(|&b| write(&mut bit, b, i))?,
                Step::ComputeParity { target, sources } => {
                    read_ops(&bit, &slot, sources, i)?;
                    write(&mut bit, *target, i)?;
                }
                Step::EvalRhs { slot: s, sources } | Step::EvalKeyCheck { slot: s, sources } => {
                    read_ops(&bit, &slot, sources, i)?;
                    write(&mut slot, *s, i)?;
                }
                Step::CombineSlots { slot: s, sources } => {
                    sources.iter().try_for_each(|&t| read_slot(&slot, t, i))?;
                    write(&mut slot, *s, i)?;
                }
                Step::CorrectSingle { key, target } => {
                    read_slot(&slot, *key, i)?;
                    read_bit(&bit, *target, i)?;
                }
                Step::CorrectPair { keys, targets, .. } => {
                    keys.iter().try_for_each(|&k| read_slot(&slot, k, i))?;
                    targets.iter().try_for_each(|&t| read_bit(&bit, t, i))?;
                }
                Step::CorrectGeneral { keys, targets, inverse } => {
                    keys.iter().try_for_each(|&k| read_slot(&slot, k, i))?;
                    targets.iter().try_for_each(|&t| read_bit(&bit, t, i))?;
                    if inverse.len() != targets.len() || inverse.iter().flatten().any(|&j| j >= keys.len()) {
                        return Err(format!("step {i} has a malformed inverse"));
                    }
                }
                Step::Recompute { guard, target, sources } => {
                    guard.iter().try_for_each(|&b| read_bit(&bit, b, i))?;
                    read_ops(&bit, &slot, sources, i)?;
                    read_bit(&bit, *target, i)?;
                }
                Step::FlipList { condition, bits } => {
                    condition.iter().try_for_each(|&b| read_bit(&bit, b, i))?;
                    bits.iter().try_for_each(|&b| read_bit(&bit, b, i))?;
                }
            }
        }
        match bit.iter().position(|&d| !d) {
            Some(b) => Err(format!("bit {b} is never determined")),
            None => Ok(()),
        }
    }
}

/// Splits, decomposes and compiles in one go.
pub fn preprocess(h: &TannerGraph, mode: Mode) -> Result<(DecompositionPlan, Schedule)> {
    let (work, p) = plan(h)?;
    let s = compile(&p, &work, mode)?;
    Ok((p, s))
}

/// Bound on XORs per encode: 2·M·(k̄−1) for graphs of bit degree at most
/// three, 4·M·(k̄−1) after splitting, with M and k̄ taken from the unsplit
/// graph. M·(k̄−1) is just edges minus checks.
pub fn xor_budget(plan: &DecompositionPlan, g: &TannerGraph) -> u64 {
    let (edges, checks, factor) = match &plan.split {
        None => (g.n_edges(), g.n_checks(), 2),
        Some(map) => (g.n_edges() - 2 * map.aux_checks.len(), map.original_n_checks, 4),
    };
    factor * edges.saturating_sub(checks) as u64
}

pub fn compile(plan: &DecompositionPlan, g: &TannerGraph, mode: Mode) -> Result<Schedule> {
    plan.validate(g).map_err(|e| Error::Usage(format!("plan does not fit the graph: {e}")))?;
    let n_bits = plan.split.as_ref().map_or(g.n_bits(), |m| m.original_n_bits);
    let mut clone_origin = vec![0; g.n_bits() - n_bits];
    if let Some(map) = &plan.split {
        for (&orig, chain) in &map.clones {
            for &c in chain.iter().filter(|&&c| c >= n_bits) {
                clone_origin[c - n_bits] = orig;
            }
        }
    }
    let mut c = Compiler::new(plan, g);
    for (t, piece) in plan.pieces.iter().enumerate() {
        c.piece_prologue(t);
        match piece {
            _ if !piece.attached().is_empty() => c.keyed(piece, t, mode)?,
            Piece::Tree(p) => {
                for (check, parent) in p.tree.computation_order() {
                    let sources = c.operands(check, Some(parent), t);
                    c.steps.push(Step::ComputeParity { target: parent, sources });
                }
            }
            Piece::StoppingSet(p) => c.stopping_set(p, t, mode)?,
        }
    }
    Ok(Schedule {
        n_bits,
        n_work_bits: g.n_bits(),
        n_slots: c.n_slots,
        info_positions: plan.info_bits.clone(),
        clone_origin,
        steps: c.steps,
        xor_budget: xor_budget(plan, g),
        mode,
        graph_digest: g.digest(),
    })
}

struct Compiler<'a> {
    plan: &'a DecompositionPlan,
    g: &'a TannerGraph,
    piece_of: Vec<usize>,
    /// Piece of each synthesized check.
    synth_piece: Vec<usize>,
    /// Piece index → original checks needing their earlier part in a slot.
    requests: BTreeMap<usize, Vec<usize>>,
    /// Per original check: the latest piece `t` whose earlier part is
    /// stored, and the slot (`None` when that part is empty).
    latest: Vec<Option<(usize, Option<usize>)>>,
    star: Vec<Option<usize>>,
    n_slots: usize,
    steps: Vec<Step>,
}

impl<'a> Compiler<'a> {
    fn new(plan: &'a DecompositionPlan, g: &'a TannerGraph) -> Self {
        let mut piece_of = vec![0; g.n_bits()];
        let mut synth_piece = vec![0; plan.synthesized.len()];
        for (t, p) in plan.pieces.iter().enumerate() {
            for &b in p.bits() {
                piece_of[b] = t;
            }
            for &c in p.checks().iter().filter(|&&c| c >= plan.n_checks) {
                synth_piece[c - plan.n_checks] = t;
            }
        }
        let mut requests: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (s, &t) in plan.synthesized.iter().zip(&synth_piece) {
            requests.entry(t).or_default().extend(&s.constituents);
        }
        for v in requests.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        Compiler {
            plan,
            g,
            piece_of,
            synth_piece,
            requests,
            latest: vec![None; g.n_checks()],
            star: vec![None; plan.synthesized.len()],
            n_slots: 0,
            steps: Vec::new(),
        }
    }

    fn new_slot(&mut self) -> usize {
        self.n_slots += 1;
        self.n_slots - 1
    }

    /// Fills the slots that checks of piece `t` and later will read.
    fn piece_prologue(&mut self, t: usize) {
        for c in self.requests.get(&t).cloned().unwrap_or_default() {
            let (from, prev) = self.latest[c].unwrap_or((0, None));
            let mut sources: Vec<Operand> = prev.map(Operand::Slot).into_iter().collect();
            sources.extend(
                self.g.check(c).iter().filter(|&&b| (from..t).contains(&self.piece_of[b])).map(|&b| Operand::Bit(b)),
            );
            let slot = match sources.as_slice() {
                [] => None,
                [Operand::Slot(s)] => Some(*s),
                _ => {
                    let slot = self.new_slot();
                    self.steps.push(Step::EvalRhs { slot, sources });
                    Some(slot)
                }
            };
            self.latest[c] = Some((t, slot));
        }
        for (i, s) in self.plan.synthesized.iter().enumerate() {
            if self.synth_piece[i] != t {
                continue;
            }
            let sources: Vec<usize> = s.constituents.iter().filter_map(|&c| self.latest[c].and_then(|(_, s)| s)).collect();
            self.star[i] = match sources.as_slice() {
                [] => None,
                [one] => Some(*one),
                _ => {
                    let slot = self.new_slot();
                    self.steps.push(Step::CombineSlots { slot, sources });
                    Some(slot)
                }
            };
        }
    }

    /// Operands whose XOR gives check `c`'s value without `skip`, read
    /// while processing piece `t`.
    fn operands(&self, c: usize, skip: Option<usize>, t: usize) -> Vec<Operand> {
        let (head, from) = if c >= self.plan.n_checks {
            let i = c - self.plan.n_checks;
            (self.star[i], self.synth_piece[i])
        } else {
            match self.latest[c] {
                Some((from, slot)) => (slot, from),
                None => (None, 0),
            }
        };
        debug_assert!(from <= t);
        let mut ops: Vec<Operand> = head.map(Operand::Slot).into_iter().collect();
        ops.extend(
            self.plan
                .row(self.g, c)
                .iter()
                .filter(|&&b| Some(b) != skip && self.piece_of[b] >= from)
                .map(|&b| Operand::Bit(b)),
        );
        ops
    }

    fn stopping_set(&mut self, p: &StoppingSetPiece, t: usize, mode: Mode) -> Result<()> {
        let k = p.reevaluated_bits.len();
        if k != p.key_checks.len() || k == 0 {
            return Err(Error::Usage("stopping set needs as many reevaluated bits as key checks".into()));
        }
        let index: HashMap<usize, usize> = p.reevaluated_bits.iter().enumerate().map(|(j, &b)| (b, j)).collect();
        // Which reevaluated bits each parity depends on, as sorted index sets.
        let mut sig: HashMap<usize, Vec<usize>> = HashMap::new();
        let sig_of = |sig: &HashMap<usize, Vec<usize>>, ops: &[Operand]| {
            ops.iter().fold(Vec::new(), |acc, op| match op {
                Operand::Bit(b) => match index.get(b) {
                    Some(&j) => sym_diff(&acc, &[j]),
                    None => sig.get(b).map_or(acc.clone(), |s| sym_diff(&acc, s)),
                },
                Operand::Slot(_) => acc,
            })
        };
        self.steps.push(Step::Zero { bits: p.reevaluated_bits.clone() });
        let mut affected = Vec::new();
        for (check, parent) in p.residual.computation_order() {
            let sources = self.operands(check, Some(parent), t);
            let s = sig_of(&sig, &sources);
            if !s.is_empty() {
                affected.push((parent, sources.clone(), s.clone()));
                sig.insert(parent, s);
            }
            self.steps.push(Step::ComputeParity { target: parent, sources });
        }
        let mut keys = Vec::with_capacity(k);
        let mut m = Vec::with_capacity(k);
        for (i, &key) in p.key_checks.iter().enumerate() {
            let slot = self.new_slot();
            let sources = self.operands(key, None, t);
            let row = sig_of(&sig, &sources);
            let expect: Vec<usize> =
                p.reevaluated_bits.iter().enumerate().filter(|(_, b)| p.key_functionals[i].binary_search(b).is_ok()).map(|(j, _)| j).collect();
            if row != expect {
                return Err(Error::Structural(format!("key check {key} disagrees with its recorded functional")));
            }
            m.push(row);
            keys.push(slot);
            self.steps.push(Step::EvalKeyCheck { slot, sources });
        }
        let inverse = invert(&m).ok_or_else(|| {
            Error::Structural(format!("reevaluated bits {:?} cannot be solved for", p.reevaluated_bits))
        })?;
        self.steps.push(correction_step(&m, &inverse, &keys, &p.reevaluated_bits));
        let bit_of = |s: &[usize]| s.iter().map(|&j| p.reevaluated_bits[j]).collect::<Vec<_>>();
        match mode {
            Mode::Recompute => {
                for (target, sources, s) in affected {
                    self.steps.push(Step::Recompute { guard: bit_of(&s), target, sources });
                }
            }
            Mode::Flip => {
                let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
                for (target, _, s) in affected {
                    groups.entry(s).or_default().push(target);
                }
                for (s, mut bits) in groups {
                    bits.sort_unstable();
                    self.steps.push(Step::FlipList { condition: bit_of(&s), bits });
                }
            }
        }
        Ok(())
    }

    /// A piece with attached checks. Keys are split into blocks that can be
    /// solved one after another: a block's bits never disturb the keys of
    /// blocks before it. Each block is evaluated, solved and propagated
    /// before the next is evaluated.
    fn keyed(&mut self, piece: &Piece, t: usize, mode: Mode) -> Result<()> {
        let (plan, g) = (self.plan, self.g);
        let row = |c: usize| plan.row(g, c);
        let keys: Vec<usize> = piece.key_checks().iter().copied().chain(piece.attached().iter().map(|a| a.check)).collect();
        let mut solved: Vec<usize> = match piece {
            Piece::StoppingSet(p) => p.reevaluated_bits.clone(),
            Piece::Tree(_) => Vec::new(),
        };
        solved.extend(piece.attached().iter().map(|a| a.solve_for));
        let k = keys.len();
        self.steps.push(Step::Zero { bits: solved.clone() });
        for (check, parent) in piece.tree().computation_order() {
            let sources = self.operands(check, Some(parent), t);
            self.steps.push(Step::ComputeParity { target: parent, sources });
        }
        let index = TreeIndex::new(piece.tree(), row);
        let check_of: HashMap<usize, usize> = piece.tree().parents().iter().map(|&(c, b)| (b, c)).collect();
        let effects: Vec<Vec<usize>> =
            solved.iter().map(|&r| index.effect(r, row, usize::MAX).expect("uncapped")).collect();
        let mut key_rows: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, &c) in keys.iter().enumerate() {
            for &b in row(c) {
                key_rows.entry(b).or_default().push(i);
            }
        }
        // m[i]: columns j whose bit flips key i.
        let mut m = vec![Vec::new(); k];
        for (j, e) in effects.iter().enumerate() {
            let mut hit: HashMap<usize, bool> = HashMap::new();
            for b in e {
                for &i in key_rows.get(b).map_or(&[][..], Vec::as_slice) {
                    *hit.entry(i).or_default() ^= true;
                }
            }
            for (i, h) in hit {
                if h {
                    m[i].push(j);
                }
            }
        }
        for r in &mut m {
            r.sort_unstable();
        }
        let unsolvable = || Error::Structural(format!("key checks {keys:?} cannot be solved for bits {solved:?}"));
        let matched = perfect_matching(&m, k).ok_or_else(unsolvable)?;
        for block in solve_order(&m, &matched) {
            let cols: Vec<usize> = block.iter().map(|&i| matched[i]).collect();
            let sub: Vec<Vec<usize>> = block
                .iter()
                .map(|&i| m[i].iter().filter_map(|j| cols.iter().position(|c| c == j)).collect::<Vec<_>>())
                .map(|mut r| {
                    r.sort_unstable();
                    r
                })
                .collect();
            let mut slots = Vec::with_capacity(block.len());
            for &i in &block {
                let slot = self.new_slot();
                let sources = self.operands(keys[i], None, t);
                self.steps.push(Step::EvalKeyCheck { slot, sources });
                slots.push(slot);
            }
            let inverse = invert(&sub).ok_or_else(unsolvable)?;
            let targets: Vec<usize> = cols.iter().map(|&j| solved[j]).collect();
            if block.len() > 2 {
                let (slots, inverse) = self.share_partial_sums(&slots, &inverse);
                self.steps.push(Step::CorrectGeneral { keys: slots, targets, inverse });
            } else {
                self.steps.push(correction_step(&sub, &inverse, &slots, &targets));
            }
            // Parities reached from this block, each with the block bits it depends on.
            let mut sig: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
            for &j in &cols {
                for &p in &effects[j][1..] {
                    sig.entry((index.position(p), p)).or_default().push(solved[j]);
                }
            }
            match mode {
                Mode::Recompute => {
                    for ((_, p), mut guard) in sig {
                        guard.sort_unstable();
                        let sources = self.operands(check_of[&p], Some(p), t);
                        self.steps.push(Step::Recompute { guard, target: p, sources });
                    }
                }
                Mode::Flip if cols.len() <= 2 => {
                    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
                    for ((_, p), mut cond) in sig {
                        cond.sort_unstable();
                        groups.entry(cond).or_default().push(p);
                    }
                    for (condition, mut bits) in groups {
                        bits.sort_unstable();
                        self.steps.push(Step::FlipList { condition, bits });
                    }
                }
                // Per-bit lists: overlaps flip twice and cancel, at no XOR cost.
                Mode::Flip => {
                    for &j in &cols {
                        if effects[j].len() > 1 {
                            let mut bits = effects[j][1..].to_vec();
                            bits.sort_unstable();
                            self.steps.push(Step::FlipList { condition: vec![solved[j]], bits });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl Compiler<'_> {
    /// Rewrites `rows` (each an XOR of `keys`) to read shared partial sums.
    /// Keys are cut into groups of `w`; every distinct nonempty pattern a row
    /// uses within a group becomes one slot, built from a smaller pattern
    /// already at hand. The group width with the fewest XORs overall wins,
    /// width 1 being the rows as given.
    fn share_partial_sums(&mut self, keys: &[usize], rows: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<usize>>) {
        let plain: usize = rows.iter().map(|r| r.len().saturating_sub(1)).sum();
        let best = (2..=MAX_GROUP_WIDTH)
            .map(|w| (partial_sum_plan(rows, w), w))
            .min_by_key(|(plan, _)| plan.cost)
            .filter(|(plan, _)| plan.cost < plain);
        let Some((plan, w)) = best else { return (keys.to_vec(), rows.to_vec()) };
        let mut slot_of: HashMap<(usize, u32), usize> = HashMap::new();
        for (g, mask) in plan.builds {
            let base = g * w;
            let slot = match plan.from[&(g, mask)] {
                0 => {
                    let sources = (0..w).filter(|b| mask >> b & 1 == 1).map(|b| keys[base + b]).collect();
                    let slot = self.new_slot();
                    self.steps.push(Step::CombineSlots { slot, sources });
                    slot
                }
                sub => {
                    let rest = mask & !sub;
                    let mut sources = vec![slot_of[&(g, sub)]];
                    sources.extend((0..w).filter(|b| rest >> b & 1 == 1).map(|b| keys[base + b]));
                    let slot = self.new_slot();
                    self.steps.push(Step::CombineSlots { slot, sources });
                    slot
                }
            };
            slot_of.insert((g, mask), slot);
        }
        let mut operands: Vec<usize> = Vec::new();
        let mut index: HashMap<usize, usize> = HashMap::new();
        let mut refer = |slot: usize| *index.entry(slot).or_insert_with(|| {
            operands.push(slot);
            operands.len() - 1
        });
        let rewritten = rows
            .iter()
            .map(|r| {
                group_masks(r, w)
                    .into_iter()
                    .map(|(g, mask)| match mask.count_ones() {
                        1 => refer(keys[g * w + mask.trailing_zeros() as usize]),
                        _ => refer(slot_of[&(g, mask)]),
                    })
                    .collect()
            })
            .collect();
        (operands, rewritten)
    }
}

const MAX_GROUP_WIDTH: usize = 10;

struct PartialSums {
    cost: usize,
    /// Patterns to build, in an order where each one's base comes first.
    builds: Vec<(usize, u32)>,
    /// Pattern → the smaller pattern it extends, 0 when built from keys.
    from: HashMap<(usize, u32), u32>,
}

/// Nonempty per-group bit patterns of a sorted index row.
fn group_masks(row: &[usize], w: usize) -> Vec<(usize, u32)> {
    let mut out: Vec<(usize, u32)> = Vec::new();
    for &i in row {
        let (g, b) = (i / w, i % w);
        match out.last_mut() {
            Some((last, mask)) if *last == g => *mask |= 1 << b,
            _ => out.push((g, 1 << b)),
        }
    }
    out
}

fn partial_sum_plan(rows: &[Vec<usize>], w: usize) -> PartialSums {
    let mut needed: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    let mut cost = 0;
    for r in rows {
        let masks = group_masks(r, w);
        cost += masks.len().saturating_sub(1);
        for (g, mask) in masks {
            if mask.count_ones() > 1 {
                needed.entry(g).or_default().push(mask);
            }
        }
    }
    let mut builds = Vec::new();
    let mut from = HashMap::new();
    for (g, mut masks) in needed {
        masks.sort_unstable_by_key(|m| (m.count_ones(), *m));
        masks.dedup();
        let mut built: Vec<u32> = Vec::new();
        for mask in masks {
            let sub = built.iter().copied().filter(|&b| b & !mask == 0).max_by_key(|b| b.count_ones()).unwrap_or(0);
            let singles = (mask & !sub).count_ones() as usize;
            cost += if sub == 0 { singles - 1 } else { singles };
            from.insert((g, mask), sub);
            builds.push((g, mask));
            built.push(mask);
        }
    }
    PartialSums { cost, builds, from }
}

/// A column for every row of a square 0/1 matrix, each used once, with
/// `m[i]` containing `matched[i]`. Simple augmenting paths.
fn perfect_matching(m: &[Vec<usize>], k: usize) -> Option<Vec<usize>> {
    fn augment(i: usize, m: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &j in &m[i] {
            if std::mem::replace(&mut seen[j], true) {
                continue;
            }
            if owner[j].is_none_or(|o| augment(o, m, owner, seen)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; k];
    for i in 0..k {
        // Diagonal first: keeps a key on its own bit when that already works.
        if m[i].binary_search(&i).is_ok() && owner[i].is_none() {
            owner[i] = Some(i);
        }
    }
    for i in 0..k {
        if owner.contains(&Some(i)) {
            continue;
        }
        if !augment(i, m, &mut owner, &mut vec![false; k]) {
            return None;
        }
    }
    let mut matched = vec![0; k];
    for (j, o) in owner.into_iter().enumerate() {
        matched[o?] = j;
    }
    Some(matched)
}

/// Blocks of keys in an order where no block's bits flip an earlier
/// block's keys: the strongly connected components of "bit of key `a`
/// flips key `b`", in topological order.
fn solve_order(m: &[Vec<usize>], matched: &[usize]) -> Vec<Vec<usize>> {
    use petgraph::graph::DiGraph;
    let k = m.len();
    let mut key_of = vec![0; k];
    for (i, &j) in matched.iter().enumerate() {
        key_of[j] = i;
    }
    let mut graph = DiGraph::<(), ()>::with_capacity(k, 0);
    let nodes: Vec<_> = (0..k).map(|_| graph.add_node(())).collect();
    for (i, row) in m.iter().enumerate() {
        for &j in row {
            let a = key_of[j];
            if a != i {
                graph.add_edge(nodes[a], nodes[i], ());
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = petgraph::algo::tarjan_scc(&graph)
        .into_iter()
        .rev()
        .map(|scc| {
            let mut v: Vec<usize> = scc.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    blocks.shrink_to_fit();
    blocks
}

/// Inverse of a square GF(2) matrix given as sorted column sets per row.
/// Returns, per column `j`, the rows whose XOR yields unknown `j`.
fn invert(m: &[Vec<usize>]) -> Option<Vec<Vec<usize>>> {
    let k = m.len();
    let mut rows: Vec<(Vec<usize>, Vec<usize>)> = m.iter().enumerate().map(|(i, r)| (r.clone(), vec![i])).collect();
    for col in 0..k {
        let p = (col..k).find(|&r| rows[r].0.binary_search(&col).is_ok())?;
        rows.swap(col, p);
        let (pr, pc) = rows[col].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != col && row.0.binary_search(&col).is_ok() {
                row.0 = sym_diff(&row.0, &pr);
                row.1 = sym_diff(&row.1, &pc);
            }
        }
    }
    Some(rows.into_iter().map(|(_, c)| c).collect())
}

fn correction_step(m: &[Vec<usize>], inverse: &[Vec<usize>], keys: &[usize], targets: &[usize]) -> Step {
    match (keys, targets) {
        ([key], [target]) => Step::CorrectSingle { key: *key, target: *target },
        ([a, b], [x, y]) => {
            let has = |i: usize, j: usize| m[i].contains(&j);
            // Order the targets so γ always sits in α.
            let (g, d) = if has(0, 0) { (0, 1) } else { (1, 0) };
            let case = match (has(1, g), has(0, d)) {
                (true, false) => PairCase::GammaInBoth,
                (false, true) => PairCase::DeltaInBoth,
                (false, false) => PairCase::Disjoint,
                (true, true) => unreachable!("invertible by construction"),
            };
            let t = [*x, *y];
            Step::CorrectPair { case, keys: [*a, *b], targets: [t[g], t[d]] }
        }
        _ => Step::CorrectGeneral { keys: keys.to_vec(), targets: targets.to_vec(), inverse: inverse.to_vec() },
    }
}

/// Plain label-and-decide: repeatedly solves any check with exactly one
/// unknown bit. Returns how many bits it determined.
pub fn label_and_decide(g: &TannerGraph, x: &mut [Option<bool>]) -> usize {
    let mut unknown: Vec<usize> = (0..g.n_checks()).map(|c| g.check(c).iter().filter(|&&b| x[b].is_none()).count()).collect();
    let mut queue: Vec<usize> = (0..g.n_checks()).filter(|&c| unknown[c] == 1).collect();
    let mut decided = 0;
    while let Some(c) = queue.pop() {
        let Some(&target) = g.check(c).iter().find(|&&b| x[b].is_none()) else { continue };
        x[target] = Some(g.check(c).iter().filter(|&&b| b != target).fold(false, |a, &b| a ^ x[b].unwrap()));
        decided += 1;
        for &d in g.bit(target) {
            unknown[d] -= 1;
            if unknown[d] == 1 {
                queue.push(d);
            }
        }
    }
    decided
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::PlanBuilder;
    use crate::fixtures::{code_13_26, nine_check_set, seven_tier_tree, three_check_tree};
    use proptest::prelude::*;

    fn satisfied(g: &TannerGraph, x: &BitWord) -> bool {
        (0..g.n_checks()).all(|c| g.check(c).iter().filter(|&&b| x.get(b)).count() % 2 == 0)
    }

    fn word(bits: &[u8]) -> BitWord {
        BitWord::from_bools(&bits.iter().map(|&b| b == 1).collect::<Vec<_>>())
    }

    #[test]
    fn correction_cases() {
        assert_eq!(solve_correction(PairCase::Disjoint, true, true), (true, true));
        for case in [PairCase::GammaInBoth, PairCase::DeltaInBoth, PairCase::Disjoint] {
            assert_eq!(solve_correction(case, false, false), (false, false));
        }
        // γ in both: α = γ, β = γ + δ. With syndromes (1, 0): γ = 1, δ = 1.
        assert_eq!(solve_correction(PairCase::GammaInBoth, true, false), (true, true));
        assert_eq!(solve_correction(PairCase::DeltaInBoth, false, true), (true, true));
    }

    #[test]
    fn three_check_tree_takes_three_parity_steps() {
        let g = three_check_tree();
        let plan = PlanBuilder::new(&g).tree(&[0, 1, 2], &[(0, 3), (1, 6), (2, 9)]).unwrap().build().unwrap();
        let s = compile(&plan, &g, Mode::Flip).unwrap();
        let targets: Vec<usize> = s
            .steps
            .iter()
            .map(|st| match st {
                Step::ComputeParity { target, .. } => *target,
                other => panic!("unexpected step {other:?}"),
            })
            .collect();
        // C1 is the deepest check: x4 comes first, then x7 and x10 read it.
        assert_eq!(targets, vec![3, 6, 9]);
        s.validate().unwrap();
    }

    #[test]
    fn seven_tier_tree_costs_21_xors() {
        let g = seven_tier_tree();
        let parents = [(0, 0), (1, 1), (2, 2), (3, 3), (4, 5), (5, 8), (6, 10)];
        let plan = PlanBuilder::new(&g).tree(&[0, 1, 2, 3, 4, 5, 6], &parents).unwrap().build().unwrap();
        let s = compile(&plan, &g, Mode::Flip).unwrap();
        for info in [vec![0u8; 9], vec![1; 9], vec![1, 0, 1, 1, 0, 0, 1, 0, 1]] {
            let r = s.encode(&word(&info)).unwrap();
            assert_eq!(r.xor_count, 21);
            assert!(satisfied(&g, &r.codeword));
        }
        assert_eq!(s.static_xor_count(), 21);
    }

    #[test]
    fn nine_check_set_flips_partitioned_lists() {
        // Keys C8, C9 solving for x5 and x8, over the seven-tier residual.
        let g = nine_check_set();
        let parents = [(0, 0), (1, 1), (2, 2), (3, 3), (4, 5), (5, 8), (6, 10)];
        let plan = PlanBuilder::new(&g)
            .stopping_set(&[0, 1, 2, 3, 4, 5, 6, 7, 8], &[7, 8], &parents, &[4, 7])
            .unwrap()
            .build()
            .unwrap();
        let s = compile(&plan, &g, Mode::Flip).unwrap();
        let flips: Vec<(Vec<usize>, Vec<usize>)> = s
            .steps
            .iter()
            .filter_map(|st| match st {
                Step::FlipList { condition, bits } => Some((condition.clone(), bits.clone())),
                _ => None,
            })
            .collect();
        // x1, x2 depend on x5 alone, x4 on x8 alone, x3 on both.
        assert_eq!(flips, vec![(vec![4], vec![0, 1]), (vec![4, 7], vec![2]), (vec![7], vec![3])]);
        assert!(s.steps.iter().any(|st| matches!(st, Step::CorrectPair { case: PairCase::Disjoint, .. })));
    }

    /// Pinned two-piece plan for the (13, 26) code.
    fn pinned_13_26(g: &TannerGraph) -> DecompositionPlan {
        let x = |i: usize| i - 1;
        let c = |i: usize| i - 1;
        PlanBuilder::new(g)
            .stopping_set(
                &[1, 2, 4, 6, 7, 9, 10, 12, 13].map(c),
                &[c(10), c(12)],
                &[(1, 21), (7, 14), (2, 8), (6, 7), (13, 10), (4, 24), (9, 2)].map(|(a, b)| (c(a), x(b))),
                &[x(1), x(18)],
            )
            .unwrap()
            .stopping_set(
                &[3, 5, 8, 11].map(c),
                &[c(3), c(5)],
                &[(11, 20), (8, 26)].map(|(a, b)| (c(a), x(b))),
                &[x(3), x(6)],
            )
            .unwrap()
            .info_order(&[9, 13, 22, 23, 5, 16, 4, 12, 17, 11, 15, 19, 25].map(x))
            .build()
            .unwrap()
    }

    #[test]
    fn pinned_13_26_plan_reproduces_the_worked_codeword() {
        let g = code_13_26();
        let plan = pinned_13_26(&g);
        let info = word(&[0, 1, 1, 1, 0, 1, 1, 0, 0, 1, 0, 1, 1]);
        for mode in [Mode::Flip, Mode::Recompute] {
            let s = compile(&plan, &g, mode).unwrap();
            s.validate().unwrap();
            let r = s.encode(&info).unwrap();
            let order = [9, 13, 22, 23, 5, 16, 4, 12, 17, 1, 18, 21, 14, 8, 7, 10, 24, 2, 11, 15, 19, 25, 3, 6, 20, 26];
            let expect = [0, 1, 1, 1, 0, 1, 1, 0, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 1, 1, 1, 0, 1];
            for (&b, &v) in order.iter().zip(&expect) {
                assert_eq!(r.codeword.get(b - 1), v == 1, "x{b}");
            }
            assert!(r.xor_count <= s.xor_budget);
        }
    }

    #[test]
    fn genuine_set_stalls_label_and_decide() {
        let g = code_13_26();
        let plan = pinned_13_26(&g);
        let mut x = vec![None; g.n_bits()];
        for &b in &plan.info_bits {
            x[b] = Some(false);
        }
        let decided = label_and_decide(&g, &mut x);
        assert!(decided < plan.parity_bits.len());
        assert!(x.iter().any(Option::is_none));
    }

    #[test]
    fn zero_in_zero_out() {
        let g = code_13_26();
        let (_, s) = preprocess(&g, Mode::Flip).unwrap();
        let r = s.encode(&BitWord::zeros(s.n_info())).unwrap();
        assert!(r.codeword.is_zero());
    }

    #[test]
    fn wrong_info_length_is_rejected() {
        let g = code_13_26();
        let (_, s) = preprocess(&g, Mode::Flip).unwrap();
        assert!(matches!(s.encode(&BitWord::zeros(3)), Err(Error::Usage(_))));
    }

    fn graph(max_deg: usize) -> impl Strategy<Value = TannerGraph> {
        (2usize..40, 1usize..24).prop_flat_map(move |(n, m)| {
            prop::collection::vec(prop::collection::btree_set(0..m, 1..=max_deg.min(m)), n).prop_filter_map(
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

    fn xor_rows() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
        (3usize..40).prop_flat_map(|k| {
            (Just(k), prop::collection::vec(prop::collection::btree_set(0..k, 1..=k), 1..k))
                .prop_map(|(k, rows)| (k, rows.into_iter().map(|r| r.into_iter().collect()).collect()))
        })
    }

    proptest! {
        #[test]
        fn shared_partial_sums_keep_every_row((k, rows) in xor_rows(), seed in any::<u64>()) {
            let g = three_check_tree();
            let plan = PlanBuilder::new(&g).tree(&[0, 1, 2], &[(0, 3), (1, 6), (2, 9)]).unwrap().build().unwrap();
            let mut c = Compiler::new(&plan, &g);
            let keys: Vec<usize> = (0..k).map(|_| c.new_slot()).collect();
            let (operands, rewritten) = c.share_partial_sums(&keys, &rows);
            let mut slot = vec![false; c.n_slots];
            for (i, &s) in keys.iter().enumerate() {
                slot[s] = seed >> (i % 64) & 1 == 1;
            }
            let mut extra = 0;
            for step in &c.steps {
                let Step::CombineSlots { slot: s, sources } = step else { unreachable!() };
                slot[*s] = sources.iter().fold(false, |a, &t| a ^ slot[t]);
                extra += step.xor_cost();
            }
            for (r, w) in rows.iter().zip(&rewritten) {
                let want = r.iter().fold(false, |a, &i| a ^ slot[keys[i]]);
                prop_assert_eq!(w.iter().fold(false, |a, &i| a ^ slot[operands[i]]), want);
            }
            let plain: usize = rows.iter().map(|r| r.len() - 1).sum();
            let after: usize = rewritten.iter().map(|r| r.len().saturating_sub(1)).sum();
            prop_assert!(extra + after <= plain);
        }

        #[test]
        fn codewords_satisfy_every_check(g in graph(6), seed in any::<u64>()) {
            let (_, s) = preprocess(&g, Mode::Flip).unwrap();
            prop_assert_eq!(s.validate(), Ok(()));
            let info = BitWord::from_bools(&(0..s.n_info()).map(|i| (seed >> (i % 64)) & 1 == 1).collect::<Vec<_>>());
            let r = s.encode(&info).unwrap();
            prop_assert!(satisfied(&g, &r.codeword));
            prop_assert!(r.xor_count <= s.xor_budget, "{} > {}", r.xor_count, s.xor_budget);
            for (i, &p) in s.systematic_positions().iter().enumerate() {
                prop_assert_eq!(r.codeword.get(p), info.get(i));
            }
        }

        #[test]
        fn modes_agree_and_encoding_is_linear(g in graph(3), a in any::<u64>(), b in any::<u64>()) {
            let (p, flip) = preprocess(&g, Mode::Flip).unwrap();
            let (work, _) = crate::decompose::plan(&g).unwrap();
            let rec = compile(&p, &work, Mode::Recompute).unwrap();
            let w = |seed: u64| BitWord::from_bools(&(0..flip.n_info()).map(|i| (seed >> (i % 64)) & 1 == 1).collect::<Vec<_>>());
            let (u, v) = (w(a), w(b));
            let mut uv = u.clone();
            uv.xor_assign(&v).unwrap();
            let eu = flip.encode(&u).unwrap().codeword;
            prop_assert_eq!(&eu, &rec.encode(&u).unwrap().codeword);
            let mut sum = eu;
            sum.xor_assign(&flip.encode(&v).unwrap().codeword).unwrap();
            prop_assert_eq!(sum, flip.encode(&uv).unwrap().codeword);
        }
    }
}
