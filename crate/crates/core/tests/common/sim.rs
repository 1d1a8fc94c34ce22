//! 64-lane bit-parallel simulation used to compare circuits exhaustively.

use pdrtune::aiger::{Aig, Lit, VarKind};

pub struct Lanes<'a> {
    aig: &'a Aig,
    vals: Vec<u64>,
}

impl<'a> Lanes<'a> {
    pub fn new(aig: &'a Aig) -> Lanes<'a> {
        Lanes { aig, vals: vec![0; aig.max_var() as usize + 1] }
    }

    fn lit(&self, l: Lit) -> u64 {
        let v = self.vals[l.var() as usize];
        if l.is_negated() {
            !v
        } else {
            v
        }
    }

    /// One step; returns `(outputs, next_state)`, one word per signal.
    pub fn step(&mut self, inputs: &[u64], state: &[u64]) -> (Vec<u64>, Vec<u64>) {
        let aig = self.aig;
        for (i, &w) in inputs.iter().enumerate() {
            self.vals[aig.input_var(i) as usize] = w;
        }
        for (i, &w) in state.iter().enumerate() {
            self.vals[aig.latch_var(i) as usize] = w;
        }
        for (i, g) in aig.ands().iter().enumerate() {
            let v = self.lit(g.rhs0) & self.lit(g.rhs1);
            self.vals[aig.and_var(i) as usize] = v;
        }
        let outs = aig.outputs().iter().map(|&o| self.lit(o)).collect();
        let next = aig.latches().iter().map(|l| self.lit(l.next)).collect();
        (outs, next)
    }
}

/// Indices of latches that are kept by cone-of-influence reduction.
pub fn live_latches(aig: &Aig) -> Vec<usize> {
    let live = pdrtune::coi::live_vars(aig);
    (0..aig.num_latches()).filter(|&i| live[aig.latch_var(i) as usize]).collect()
}

/// Sanity check of the lane simulator against the library's scalar one.
pub fn agrees_with_scalar(aig: &Aig, inputs: &[bool], state: &[bool]) -> bool {
    let word = |b: bool| if b { !0u64 } else { 0 };
    let mut lanes = Lanes::new(aig);
    let (o, n) = lanes.step(&inputs.iter().map(|&b| word(b)).collect::<Vec<_>>(), &state.iter().map(|&b| word(b)).collect::<Vec<_>>());
    let (so, sn) = aig.simulate(inputs, state).unwrap();
    o.iter().map(|&w| w == !0).eq(so) && n.iter().map(|&w| w == !0).eq(sn) && matches!(aig.kind(0), VarKind::Const)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Compares 3-step output traces of `aig` and its reduction `reduced`.
/// Every input sequence is enumerated when the three steps need at most
/// `max_bits` input bits; wider circuits get every first-step vector with
/// pseudo-random continuations. Undefined latches start at 0 and at 1.
/// Returns the number of traces compared.
pub fn coi_traces_match(aig: &Aig, reduced: &Aig, max_bits: u32) -> Result<u64, String> {
    const STEPS: usize = 3;
    let ni = aig.num_inputs();
    let total_bits = (STEPS * ni) as u32;
    let exhaustive = total_bits <= max_bits;
    let sequences: u64 = 1 << total_bits.min(max_bits);
    let words = sequences.div_ceil(64);
    let kept = live_latches(aig);
    let bit = |k: u64, t: usize, i: usize| -> bool {
        let pos = t * ni + i;
        if exhaustive || pos < max_bits as usize {
            k >> pos & 1 == 1
        } else {
            splitmix(k ^ (pos as u64) << 40) & 1 == 1
        }
    };
    let mut full = Lanes::new(aig);
    let mut small = Lanes::new(reduced);
    for undef in [false, true] {
        let init: Vec<u64> = aig.initial_state(undef).iter().map(|&b| if b { !0 } else { 0 }).collect();
        for w in 0..words {
            let mut s_full = init.clone();
            let mut s_small: Vec<u64> = kept.iter().map(|&i| init[i]).collect();
            for t in 0..STEPS {
                let inputs: Vec<u64> =
                    (0..ni).map(|i| (0..64u64).fold(0u64, |acc, lane| acc | (bit(w * 64 + lane, t, i) as u64) << lane)).collect();
                let (o1, n1) = full.step(&inputs, &s_full);
                let (o2, n2) = small.step(&inputs, &s_small);
                let valid = if sequences >= 64 { !0u64 } else { (1u64 << sequences) - 1 };
                for (k, (a, b)) in o1.iter().zip(&o2).enumerate() {
                    if (a ^ b) & valid != 0 {
                        return Err(format!("output {k} differs at step {t} (word {w}, undef as {undef})"));
                    }
                }
                s_full = n1;
                s_small = n2;
            }
        }
    }
    Ok(2 * sequences)
}
