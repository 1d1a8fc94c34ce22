//! Graph view of a circuit for the GNN encoder.
//!
//! Nodes are numbered CONST (only when referenced), PIs, latches, ANDs in
//! topological order, then one PO node per output. Edges run fanin to
//! fanout. Every node carries an 8-wide feature row:
//!
//! ```text
//! [0..5)  one-hot kind: CONST, PI, LATCH, AND, PO
//! 5       number of complemented in-edges / 2
//! 6       ln(1 + out-degree)
//! 7       logic level / max level (0 when the circuit is flat)
//! ```

use std::io::Write;

use crate::aiger::{Aig, Lit, VarKind};
use crate::coi;
use crate::features::compute_levels;

pub const NODE_FEATURES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Const,
    Input,
    Latch,
    And,
    Output,
}

impl NodeKind {
    fn one_hot_index(self) -> usize {
        match self {
            NodeKind::Const => 0,
            NodeKind::Input => 1,
            NodeKind::Latch => 2,
            NodeKind::And => 3,
            NodeKind::Output => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphData {
    pub num_nodes: usize,
    pub edges: Vec<(u32, u32)>,
    /// Row-major `num_nodes x NODE_FEATURES`.
    pub node_features: Vec<f64>,
    pub node_kind: Vec<NodeKind>,
}

impl GraphData {
    /// Builds the graph, optionally after cone-of-influence reduction. With
    /// reduction, inputs outside the cone are dropped from the graph.
    pub fn build(aig: &Aig, apply_coi: bool) -> GraphData {
        if apply_coi && aig.num_outputs() > 0 {
            let (reduced, _) = coi::reduce(aig).expect("circuit has outputs");
            build_graph(&reduced, true)
        } else {
            build_graph(aig, false)
        }
    }

    pub fn features_of(&self, node: usize) -> &[f64] {
        &self.node_features[node * NODE_FEATURES..(node + 1) * NODE_FEATURES]
    }

    /// In-neighbour lists, one per node, in edge order.
    pub fn in_neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(s, d) in &self.edges {
            adj[d as usize].push(s);
        }
        adj
    }

    /// Applies a node relabeling `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> GraphData {
        assert_eq!(perm.len(), self.num_nodes);
        let mut node_features = vec![0.0; self.node_features.len()];
        let mut node_kind = vec![NodeKind::Const; self.num_nodes];
        for (old, &new) in perm.iter().enumerate() {
            node_features[new * NODE_FEATURES..(new + 1) * NODE_FEATURES].copy_from_slice(self.features_of(old));
            node_kind[new] = self.node_kind[old];
        }
        let edges = self.edges.iter().map(|&(s, d)| (perm[s as usize] as u32, perm[d as usize] as u32)).collect();
        GraphData { num_nodes: self.num_nodes, edges, node_features, node_kind }
    }

    /// Writes `src dst` lines.
    pub fn write_edgelist(&self, mut out: impl Write) -> std::io::Result<()> {
        for (s, d) in &self.edges {
            writeln!(out, "{s} {d}")?;
        }
        Ok(())
    }

    /// Writes the feature matrix as CSV with a header row.
    pub fn write_node_features(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "node,is_const,is_pi,is_latch,is_and,is_po,inv_in,log_fanout,level")?;
        for n in 0..self.num_nodes {
            let row: Vec<String> = self.features_of(n).iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{},{}", n, row.join(","))?;
        }
        Ok(())
    }
}

fn build_graph(aig: &Aig, drop_dead_inputs: bool) -> GraphData {
    let levels = compute_levels(aig);
    let max_var = aig.max_var() as usize;

    let mut referenced = vec![false; max_var + 1];
    let mut mark = |l: Lit| referenced[l.var() as usize] = true;
    aig.ands().iter().flat_map(|g| g.fanins()).for_each(&mut mark);
    aig.latches().iter().for_each(|l| mark(l.next));
    aig.outputs().iter().for_each(|&o| mark(o));

    // Variable -> node id.
    let mut node_of = vec![u32::MAX; max_var + 1];
    let mut node_kind = Vec::new();
    let mut node_level = Vec::new();
    let mut push = |var: u32, kind: NodeKind, node_kind: &mut Vec<NodeKind>| {
        node_of[var as usize] = node_kind.len() as u32;
        node_kind.push(kind);
        node_level.push(levels.level[var as usize]);
    };
    for var in 0..=max_var as u32 {
        let kind = match aig.kind(var) {
            VarKind::Const if referenced[0] => NodeKind::Const,
            VarKind::Const => continue,
            VarKind::Input(_) if drop_dead_inputs && !referenced[var as usize] => continue,
            VarKind::Input(_) => NodeKind::Input,
            VarKind::Latch(_) => NodeKind::Latch,
            VarKind::And(_) => NodeKind::And,
        };
        push(var, kind, &mut node_kind);
    }

    let mut edges = Vec::new();
    let mut inverted_in = vec![0u32; node_kind.len() + aig.num_outputs()];
    let mut add_edge = |src: Lit, dst: u32, edges: &mut Vec<(u32, u32)>| {
        let s = node_of[src.var() as usize];
        if s == dst {
            // A latch holding its own value; no self-loops in the graph.
            return;
        }
        edges.push((s, dst));
        inverted_in[dst as usize] += src.is_negated() as u32;
    };
    for (i, gate) in aig.ands().iter().enumerate() {
        let dst = node_of[aig.and_var(i) as usize];
        add_edge(gate.rhs0, dst, &mut edges);
        add_edge(gate.rhs1, dst, &mut edges);
    }
    for (i, latch) in aig.latches().iter().enumerate() {
        add_edge(latch.next, node_of[aig.latch_var(i) as usize], &mut edges);
    }
    for &o in aig.outputs() {
        let dst = node_kind.len() as u32;
        node_kind.push(NodeKind::Output);
        node_level.push(levels.level[o.var() as usize]);
        add_edge(o, dst, &mut edges);
    }

    let num_nodes = node_kind.len();
    let mut out_degree = vec![0u32; num_nodes];
    for &(s, _) in &edges {
        out_degree[s as usize] += 1;
    }
    let max_level = node_level.iter().copied().max().unwrap_or(0);
    let mut node_features = vec![0.0; num_nodes * NODE_FEATURES];
    for n in 0..num_nodes {
        let row = &mut node_features[n * NODE_FEATURES..(n + 1) * NODE_FEATURES];
        row[node_kind[n].one_hot_index()] = 1.0;
        row[5] = inverted_in[n] as f64 / 2.0;
        row[6] = (out_degree[n] as f64).ln_1p();
        row[7] = if max_level == 0 { 0.0 } else { node_level[n] as f64 / max_level as f64 };
    }
    GraphData { num_nodes, edges, node_features, node_kind }
}
