//! Static circuit features.
//!
//! Eleven numbers per circuit, always computed on the original (unreduced)
//! AIG:
//!
//! | idx | name              | category             |
//! |-----|-------------------|----------------------|
//! | 0   | `num_pi`          | scale                |
//! | 1   | `num_po`          | scale                |
//! | 2   | `num_latches`     | scale                |
//! | 3   | `num_ands`        | scale                |
//! | 4   | `num_mux`         | functional           |
//! | 5   | `num_xor`         | functional           |
//! | 6   | `num_adder`       | functional (HA + FA) |
//! | 7   | `max_level`       | depth                |
//! | 8   | `avg_level`       | depth                |
//! | 9   | `flop_fanout_var` | connectivity         |
//! | 10  | `flop_fanout_std` | connectivity         |

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aiger::{Aig, Lit};

pub const NUM_FEATURES: usize = 11;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "num_pi",
    "num_po",
    "num_latches",
    "num_ands",
    "num_mux",
    "num_xor",
    "num_adder",
    "max_level",
    "avg_level",
    "flop_fanout_var",
    "flop_fanout_std",
];

/// Index of `flop_fanout_std` in [`FEATURE_NAMES`].
pub const FLOP_STD_INDEX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CircuitFeatures {
    pub num_pi: usize,
    pub num_po: usize,
    pub num_latches: usize,
    pub num_ands: usize,
    pub num_mux: usize,
    pub num_xor: usize,
    pub num_adder: usize,
    pub max_level: u32,
    pub avg_level: f64,
    pub flop_fanout_var: f64,
    pub flop_fanout_std: f64,
}

impl CircuitFeatures {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [
            self.num_pi as f64,
            self.num_po as f64,
            self.num_latches as f64,
            self.num_ands as f64,
            self.num_mux as f64,
            self.num_xor as f64,
            self.num_adder as f64,
            self.max_level as f64,
            self.avg_level,
            self.flop_fanout_var,
            self.flop_fanout_std,
        ]
    }
}

/// Full feature extraction.
pub fn extract(aig: &Aig) -> CircuitFeatures {
    let levels = compute_levels(aig);
    let (flop_fanout_var, flop_fanout_std) = flop_fanout_stats(aig);
    let patterns = count_patterns(aig);
    CircuitFeatures {
        num_pi: aig.num_inputs(),
        num_po: aig.num_outputs(),
        num_latches: aig.num_latches(),
        num_ands: aig.num_ands(),
        num_mux: patterns.mux,
        num_xor: patterns.xor,
        num_adder: patterns.half_adders.len() + patterns.full_adders.len(),
        max_level: levels.max,
        avg_level: levels.avg,
        flop_fanout_var,
        flop_fanout_std,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Levels {
    /// Level of every variable, indexed by variable.
    pub level: Vec<u32>,
    pub max: u32,
    /// Mean over AND gates only; zero when there are none.
    pub avg: f64,
}

pub fn compute_levels(aig: &Aig) -> Levels {
    let first_and = aig.num_inputs() + aig.num_latches() + 1;
    let mut level = vec![0u32; aig.max_var() as usize + 1];
    let mut sum = 0u64;
    let mut max = 0;
    for (i, gate) in aig.ands().iter().enumerate() {
        let l = 1 + level[gate.rhs0.var() as usize].max(level[gate.rhs1.var() as usize]);
        level[first_and + i] = l;
        sum += l as u64;
        max = max.max(l);
    }
    let avg = if aig.num_ands() == 0 { 0.0 } else { sum as f64 / aig.num_ands() as f64 };
    Levels { level, max, avg }
}

/// Number of literal references to each variable from AND fanins, outputs and
/// latch next-state functions.
pub fn fanout_counts(aig: &Aig) -> Vec<u32> {
    let mut fanout = vec![0u32; aig.max_var() as usize + 1];
    for gate in aig.ands() {
        for f in gate.fanins() {
            fanout[f.var() as usize] += 1;
        }
    }
    for o in aig.outputs() {
        fanout[o.var() as usize] += 1;
    }
    for l in aig.latches() {
        fanout[l.next.var() as usize] += 1;
    }
    fanout
}

/// Population variance and standard deviation of latch fanouts.
pub fn flop_fanout_stats(aig: &Aig) -> (f64, f64) {
    if aig.num_latches() == 0 {
        return (0.0, 0.0);
    }
    let fanout = fanout_counts(aig);
    let values: Vec<f64> = (0..aig.num_latches()).map(|i| fanout[aig.latch_var(i) as usize] as f64).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (var, var.sqrt())
}

/// Two-level ITE structure: the complemented literal of the matched node
/// computes `sel ? then_lit : else_lit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MuxMatch {
    pub sel: Lit,
    pub then_lit: Lit,
    pub else_lit: Lit,
}

fn two_level(aig: &Aig, var: u32) -> Option<MuxMatch> {
    let gate = aig.and_gate(var)?;
    let (a, b) = (gate.rhs0, gate.rhs1);
    if !a.is_negated() || !b.is_negated() {
        return None;
    }
    let ga = aig.and_gate(a.var())?;
    let gb = aig.and_gate(b.var())?;
    let (fa, fb) = (ga.fanins(), gb.fanins());
    for i in 0..2 {
        for j in 0..2 {
            if fa[i] == !fb[j] && !fa[i].is_const() {
                return Some(MuxMatch { sel: fa[i], then_lit: fa[1 - i], else_lit: fb[1 - j] });
            }
        }
    }
    None
}

/// Multiplexer rooted at `var`. XOR-shaped nodes are not reported here; see
/// [`detect_xor`].
/// The selector is reported uncomplemented.
pub fn detect_mux(aig: &Aig, var: u32) -> Option<MuxMatch> {
    two_level(aig, var).filter(|m| m.then_lit != !m.else_lit).map(|m| {
        if m.sel.is_negated() {
            MuxMatch { sel: !m.sel, then_lit: m.else_lit, else_lit: m.then_lit }
        } else {
            m
        }
    })
}

/// Returns `(a, b)` such that the complemented literal of `var` computes
/// `a ^ b`.
pub fn detect_xor(aig: &Aig, var: u32) -> Option<(Lit, Lit)> {
    two_level(aig, var).filter(|m| m.then_lit == !m.else_lit && m.sel.var() != m.else_lit.var()).map(|m| (m.sel, m.else_lit))
}

/// `sum = a ^ b`, `carry = a & b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfAdder {
    pub a: Lit,
    pub b: Lit,
    pub sum: Lit,
    pub carry: Lit,
}

/// `sum = a ^ b ^ c`, `carry = MAJ(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FullAdder {
    pub a: Lit,
    pub b: Lit,
    pub c: Lit,
    pub sum: Lit,
    pub carry: Lit,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatternCounts {
    pub mux: usize,
    pub xor: usize,
    pub half_adders: Vec<HalfAdder>,
    pub full_adders: Vec<FullAdder>,
}

const MAX_CUTS: usize = 24;
// Truth table of a single-leaf cut over three variables.
const LEAF_TT: u8 = 0xAA;
const XOR3: u8 = 0x96;
const XOR2: u8 = 0x66;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Cut {
    leaves: Vec<u32>,
    tt: u8,
}

/// Re-expresses `tt` over `from` leaves as a function over `to` leaves.
fn stretch(tt: u8, from: &[u32], to: &[u32]) -> u8 {
    let pos: Vec<usize> = from.iter().map(|v| to.iter().position(|t| t == v).unwrap()).collect();
    let mut out = 0u8;
    for m in 0..8u8 {
        let mut sub = 0u8;
        for (k, &p) in pos.iter().enumerate() {
            sub |= ((m >> p) & 1) << k;
        }
        out |= ((tt >> sub) & 1) << m;
    }
    out
}

/// Truth table of `f(x ^ mask)` for a three-leaf function.
fn flip_inputs(tt: u8, mask: u8) -> u8 {
    (0..8u8).fold(0, |acc, m| acc | (((tt >> (m ^ mask)) & 1) << m))
}

fn enumerate_cuts(aig: &Aig) -> Vec<Vec<Cut>> {
    let n = aig.max_var() as usize + 1;
    let mut cuts: Vec<Vec<Cut>> = Vec::with_capacity(n);
    cuts.push(vec![Cut { leaves: vec![], tt: 0x00 }]);
    for v in 1..n as u32 {
        let trivial = Cut { leaves: vec![v], tt: LEAF_TT };
        let Some(gate) = aig.and_gate(v) else {
            cuts.push(vec![trivial]);
            continue;
        };
        let mut merged: Vec<Cut> = Vec::new();
        let (f0, f1) = (gate.rhs0, gate.rhs1);
        for c0 in &cuts[f0.var() as usize] {
            for c1 in &cuts[f1.var() as usize] {
                let mut leaves = c0.leaves.clone();
                leaves.extend(&c1.leaves);
                leaves.sort_unstable();
                leaves.dedup();
                if leaves.len() > 3 || merged.iter().any(|c| c.leaves == leaves) {
                    continue;
                }
                let t0 = stretch(c0.tt, &c0.leaves, &leaves) ^ if f0.is_negated() { 0xFF } else { 0 };
                let t1 = stretch(c1.tt, &c1.leaves, &leaves) ^ if f1.is_negated() { 0xFF } else { 0 };
                merged.push(Cut { leaves, tt: t0 & t1 });
            }
        }
        merged.sort_by_key(|c| c.leaves.len());
        merged.truncate(MAX_CUTS - 1);
        merged.push(trivial);
        cuts.push(merged);
    }
    cuts
}

/// AND gates strictly between `root` and the cut `leaves`, plus `root`.
fn cone(aig: &Aig, root: u32, leaves: &[u32]) -> Vec<u32> {
    let mut seen = vec![root];
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if let Some(g) = aig.and_gate(v) {
            for f in g.fanins() {
                let w = f.var();
                if !leaves.contains(&w) && aig.and_gate(w).is_some() && !seen.contains(&w) {
                    seen.push(w);
                    stack.push(w);
                }
            }
        }
    }
    seen
}

/// Counts functional patterns. Each AND node belongs to at most one pattern;
/// full adders are matched first, then half adders, multiplexers and XORs,
/// each pass in topological order.
pub fn count_patterns(aig: &Aig) -> PatternCounts {
    let mut counts = PatternCounts::default();
    if aig.num_ands() == 0 {
        return counts;
    }
    let cuts = enumerate_cuts(aig);
    let fanout = fanout_counts(aig);
    let and_vars: Vec<u32> = (0..aig.num_ands()).map(|i| aig.and_var(i)).collect();
    let mut used = vec![false; aig.max_var() as usize + 1];
    let free = |used: &[bool], nodes: &[u32]| nodes.iter().all(|&v| !used[v as usize]);

    // Majority functions up to input and output complementation.
    let mut maj_forms: Vec<(u8, u8, bool)> = Vec::new();
    for mask in 0..8u8 {
        let tt = flip_inputs(0xE8, mask);
        maj_forms.push((tt, mask, false));
        maj_forms.push((!tt, mask, true));
    }
    let mut three_cuts: HashMap<&[u32], Vec<(u32, u8)>> = HashMap::new();
    for &v in &and_vars {
        for c in &cuts[v as usize] {
            if c.leaves.len() == 3 {
                three_cuts.entry(&c.leaves).or_default().push((v, c.tt));
            }
        }
    }

    for &root in &and_vars {
        if used[root as usize] || detect_xor(aig, root).is_none() {
            continue;
        }
        let Some(sum_cut) = cuts[root as usize].iter().find(|c| c.leaves.len() == 3 && (c.tt == XOR3 || c.tt == !XOR3)) else {
            continue;
        };
        let leaves = &sum_cut.leaves;
        let sum_cone = cone(aig, root, leaves);
        if !free(&used, &sum_cone) {
            continue;
        }
        let Some(candidates) = three_cuts.get(leaves.as_slice()) else { continue };
        let found = candidates.iter().find_map(|&(carry, tt)| {
            if carry == root || used[carry as usize] {
                return None;
            }
            let &(_, mask, out) = maj_forms.iter().find(|f| f.0 == tt)?;
            let carry_cone = cone(aig, carry, leaves);
            free(&used, &carry_cone).then_some((carry, mask, out, carry_cone))
        });
        let Some((carry, mask, out, carry_cone)) = found else { continue };
        let lits: Vec<Lit> = (0..3).map(|k| Lit::new(leaves[k], (mask >> k) & 1 == 1)).collect();
        let parity = mask.count_ones() % 2 == 1;
        counts.full_adders.push(FullAdder {
            a: lits[0],
            b: lits[1],
            c: lits[2],
            sum: Lit::new(root, (sum_cut.tt == !XOR3) ^ parity),
            carry: Lit::new(carry, out),
        });
        for v in sum_cone.into_iter().chain(carry_cone) {
            used[v as usize] = true;
        }
    }

    let mut and_by_pair: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for &v in &and_vars {
        let g = aig.and_gate(v).unwrap();
        let (x, y) = (g.rhs0.var(), g.rhs1.var());
        if x != y {
            and_by_pair.entry((x.min(y), x.max(y))).or_default().push(v);
        }
    }
    for &root in &and_vars {
        if used[root as usize] {
            continue;
        }
        let Some((p, q)) = detect_xor(aig, root) else { continue };
        let leaves = [p.var().min(q.var()), p.var().max(q.var())];
        let sum_cone = cone(aig, root, &leaves);
        if !free(&used, &sum_cone) {
            continue;
        }
        let Some(candidates) = and_by_pair.get(&(leaves[0], leaves[1])) else { continue };
        // An inner gate of the XOR only counts as a carry if something else
        // also reads it.
        let carry =
            candidates.iter().copied().find(|&c| c != root && !used[c as usize] && (!sum_cone.contains(&c) || fanout[c as usize] >= 2));
        let Some(carry) = carry else { continue };
        let g = aig.and_gate(carry).unwrap();
        let lit_of = |var: u32| g.fanins().into_iter().find(|l| l.var() == var).unwrap();
        let (a, b) = (lit_of(leaves[0]), lit_of(leaves[1]));
        let xor_tt = cuts[root as usize].iter().find(|c| c.leaves == leaves).map(|c| c.tt).unwrap_or(XOR2);
        counts.half_adders.push(HalfAdder {
            a,
            b,
            sum: Lit::new(root, (xor_tt != XOR2) ^ a.is_negated() ^ b.is_negated()),
            carry: Lit::new(carry, false),
        });
        used[carry as usize] = true;
        for v in sum_cone {
            used[v as usize] = true;
        }
    }

    for &root in &and_vars {
        if used[root as usize] || detect_mux(aig, root).is_none() {
            continue;
        }
        let inner = aig.and_gate(root).unwrap().fanins().map(|l| l.var());
        if free(&used, &inner) {
            counts.mux += 1;
            used[root as usize] = true;
            for v in inner {
                used[v as usize] = true;
            }
        }
    }
    for &root in &and_vars {
        if used[root as usize] || detect_xor(aig, root).is_none() {
            continue;
        }
        let inner = aig.and_gate(root).unwrap().fanins().map(|l| l.var());
        if free(&used, &inner) {
            counts.xor += 1;
            used[root as usize] = true;
            for v in inner {
                used[v as usize] = true;
            }
        }
    }
    counts
}

#[derive(Debug, Error)]
pub enum NormalizerError {
    #[error("cannot fit a normalizer on an empty corpus")]
    EmptyCorpus,
    #[error("normalizer file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-dimension z-score transform.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNormalizer {
    pub shift: [f64; NUM_FEATURES],
    pub scale: [f64; NUM_FEATURES],
}

#[derive(Serialize, Deserialize)]
struct NormalizerEntry {
    name: String,
    shift: f64,
    scale: f64,
}

impl FeatureNormalizer {
    pub fn identity() -> Self {
        FeatureNormalizer { shift: [0.0; NUM_FEATURES], scale: [1.0; NUM_FEATURES] }
    }

    /// Fits mean and population standard deviation; constant dimensions get
    /// scale 1.
    pub fn fit(corpus: &[CircuitFeatures]) -> Result<Self, NormalizerError> {
        if corpus.is_empty() {
            return Err(NormalizerError::EmptyCorpus);
        }
        let rows: Vec<[f64; NUM_FEATURES]> = corpus.iter().map(|f| f.to_array()).collect();
        let n = rows.len() as f64;
        let mut shift = [0.0; NUM_FEATURES];
        let mut scale = [1.0; NUM_FEATURES];
        for d in 0..NUM_FEATURES {
            let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
            shift[d] = mean;
            let std = var.sqrt();
            if std > 1e-12 * mean.abs().max(1.0) {
                scale[d] = std;
            }
        }
        Ok(FeatureNormalizer { shift, scale })
    }

    pub fn apply(&self, f: &CircuitFeatures) -> [f64; NUM_FEATURES] {
        let raw = f.to_array();
        std::array::from_fn(|d| (raw[d] - self.shift[d]) / self.scale[d])
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<NormalizerEntry> = (0..NUM_FEATURES)
            .map(|d| NormalizerEntry { name: FEATURE_NAMES[d].to_string(), shift: self.shift[d], scale: self.scale[d] })
            .collect();
        serde_json::to_string_pretty(&entries).expect("serializing plain numbers")
    }

    pub fn from_json(text: &str) -> Result<Self, NormalizerError> {
        let entries: Vec<NormalizerEntry> = serde_json::from_str(text).map_err(|e| NormalizerError::Format(e.to_string()))?;
        let mut out = FeatureNormalizer::identity();
        let mut seen = [false; NUM_FEATURES];
        for e in entries {
            let d = FEATURE_NAMES
                .iter()
                .position(|n| *n == e.name)
                .ok_or_else(|| NormalizerError::Format(format!("unknown feature `{}`", e.name)))?;
            if e.scale <= 0.0 || !e.shift.is_finite() || !e.scale.is_finite() {
                return Err(NormalizerError::Format(format!("invalid shift/scale for `{}`", e.name)));
            }
            out.shift[d] = e.shift;
            out.scale[d] = e.scale;
            seen[d] = true;
        }
        if let Some(d) = seen.iter().position(|s| !s) {
            return Err(NormalizerError::Format(format!("missing feature `{}`", FEATURE_NAMES[d])));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NormalizerError> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NormalizerError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
