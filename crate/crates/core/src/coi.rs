//! Cone-of-influence reduction.

use std::time::Instant;

use thiserror::Error;

use crate::aiger::{Aig, AigerError, AndGate, Latch, Lit, VarKind};

#[derive(Debug, Error)]
pub enum CoiError {
    #[error("circuit has no outputs to anchor the cone of influence")]
    NoOutputs,
    #[error(transparent)]
    Aiger(#[from] AigerError),
}

/// Size statistics of one reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct CoiReport {
    pub ands_before: usize,
    pub ands_after: usize,
    pub latches_before: usize,
    pub latches_after: usize,
    pub reduction_percent: f64,
    pub elapsed_ms: f64,
}

impl CoiReport {
    pub const CSV_HEADER: &'static str = "circuit,ands_before,ands_after,latches_before,latches_after,reduction_pct,ms";

    pub fn csv_row(&self, circuit: &str) -> String {
        format!(
            "{},{},{},{},{},{:.4},{:.3}",
            circuit, self.ands_before, self.ands_after, self.latches_before, self.latches_after, self.reduction_percent, self.elapsed_ms
        )
    }
}

/// Variables that can influence some output, closed under latch next-state
/// dependencies. Indexed by variable.
pub fn live_vars(aig: &Aig) -> Vec<bool> {
    let mut live = vec![false; aig.max_var() as usize + 1];
    let mut stack: Vec<u32> = aig.outputs().iter().map(|o| o.var()).collect();
    while let Some(var) = stack.pop() {
        if std::mem::replace(&mut live[var as usize], true) {
            continue;
        }
        match aig.kind(var) {
            VarKind::And(i) => stack.extend(aig.ands()[i].fanins().iter().map(|l| l.var())),
            VarKind::Latch(i) => stack.push(aig.latches()[i].next.var()),
            VarKind::Const | VarKind::Input(_) => {}
        }
    }
    live
}

/// Removes every latch and AND gate outside the cone of influence of the
/// outputs. Inputs are all kept so the input numbering stays stable.
pub fn reduce(aig: &Aig) -> Result<(Aig, CoiReport), CoiError> {
    if aig.num_outputs() == 0 {
        return Err(CoiError::NoOutputs);
    }
    let start = Instant::now();
    let live = live_vars(aig);

    let mut remap = vec![u32::MAX; aig.max_var() as usize + 1];
    remap[0] = 0;
    let mut next = 1u32;
    for i in 0..aig.num_inputs() {
        remap[aig.input_var(i) as usize] = next;
        next += 1;
    }
    let kept_latches: Vec<usize> = (0..aig.num_latches()).filter(|&i| live[aig.latch_var(i) as usize]).collect();
    for &i in &kept_latches {
        remap[aig.latch_var(i) as usize] = next;
        next += 1;
    }
    let kept_ands: Vec<usize> = (0..aig.num_ands()).filter(|&i| live[aig.and_var(i) as usize]).collect();
    for &i in &kept_ands {
        remap[aig.and_var(i) as usize] = next;
        next += 1;
    }
    let map = |l: Lit| {
        let v = remap[l.var() as usize];
        debug_assert_ne!(v, u32::MAX, "live node depends on a dead one");
        Lit::new(v, l.is_negated())
    };

    let latches = kept_latches
        .iter()
        .map(|&i| {
            let l = aig.latches()[i];
            Latch { next: map(l.next), init: l.init }
        })
        .collect();
    let ands = kept_ands
        .iter()
        .map(|&i| {
            let g = aig.ands()[i];
            AndGate::new(map(g.rhs0), map(g.rhs1))
        })
        .collect();
    let outputs = aig.outputs().iter().map(|&o| map(o)).collect();
    let reduced = Aig::new(aig.num_inputs() as u32, latches, ands, outputs)?;

    let ands_before = aig.num_ands();
    let ands_after = reduced.num_ands();
    let report = CoiReport {
        ands_before,
        ands_after,
        latches_before: aig.num_latches(),
        latches_after: reduced.num_latches(),
        reduction_percent: 100.0 * (ands_before - ands_after) as f64 / ands_before.max(1) as f64,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((reduced, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aiger::{AigBuilder, LatchInit};

    #[test]
    fn dangling_and_removed() {
        let mut b = AigBuilder::new(3, 0);
        let used = b.and(b.input(0), b.input(1));
        b.and(b.input(1), b.input(2));
        b.output(used);
        let (reduced, report) = reduce(&b.build().unwrap()).unwrap();
        assert_eq!(report.ands_after, 1);
        assert_eq!(report.ands_before, 2);
        assert!((report.reduction_percent - 50.0).abs() < 1e-12);
        assert_eq!(reduced.num_inputs(), 3);
    }

    #[test]
    fn fully_live_circuit_is_unchanged() {
        let mut b = AigBuilder::new(2, 1);
        let x = b.and(b.input(0), b.latch(0));
        let y = b.and(x, !b.input(1));
        b.set_latch(0, y, LatchInit::Zero);
        b.output(y);
        let aig = b.build().unwrap();
        let (reduced, report) = reduce(&aig).unwrap();
        assert_eq!(reduced, aig);
        assert_eq!(report.reduction_percent, 0.0);
    }

    #[test]
    fn latch_next_state_cone_retained() {
        // out = latch0; latch0' = AND(i0, i1) which nothing else uses.
        let mut b = AigBuilder::new(2, 2);
        let hidden = b.and(b.input(0), b.input(1));
        let dead = b.and(b.latch(1), b.input(0));
        b.set_latch(0, hidden, LatchInit::Zero);
        b.set_latch(1, dead, LatchInit::Zero);
        b.output(b.latch(0));
        let aig = b.build().unwrap();

        // Oracle: repeated backward BFS until no change.
        let mut live = vec![false; aig.max_var() as usize + 1];
        for o in aig.outputs() {
            live[o.var() as usize] = true;
        }
        loop {
            let before = live.clone();
            for v in 0..live.len() as u32 {
                if !live[v as usize] {
                    continue;
                }
                match aig.kind(v) {
                    VarKind::And(i) => {
                        for f in aig.ands()[i].fanins() {
                            live[f.var() as usize] = true;
                        }
                    }
                    VarKind::Latch(i) => live[aig.latches()[i].next.var() as usize] = true,
                    _ => {}
                }
            }
            if live == before {
                break;
            }
        }
        assert_eq!(live_vars(&aig), live);

        let (reduced, report) = reduce(&aig).unwrap();
        assert_eq!(report.ands_after, 1);
        assert_eq!(report.latches_after, 1);
        assert_eq!(reduced.latches()[0].next, Lit::new(reduced.and_var(0), false));
    }

    #[test]
    fn zero_outputs_is_an_error() {
        let aig = AigBuilder::new(1, 0).build().unwrap();
        assert!(matches!(reduce(&aig), Err(CoiError::NoOutputs)));
    }

    #[test]
    fn csv_row_layout() {
        let r = CoiReport { ands_before: 10, ands_after: 8, latches_before: 3, latches_after: 3, reduction_percent: 20.0, elapsed_ms: 0.5 };
        assert_eq!(r.csv_row("x"), "x,10,8,3,3,20.0000,0.500");
    }
}
