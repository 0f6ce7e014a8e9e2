//! Initial graph construction: score all candidate spans, keep the top-K as
//! nodes, score all directed node pairs, keep the top-K as edges.

use alloc::vec::Vec;

use crate::autograd::{Tape, Var};
use crate::data::Span;
use crate::num;
use crate::params::{Binder, Initializer, ParamGroup, ParamStore};

/// Candidate graph over selected spans. Scores are recorded for decoding
/// and debugging; edge endpoints index into `nodes`.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InitialGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphNode {
    pub span: Span,
    pub score: f64,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphEdge {
    pub source: usize,
    pub target: usize,
    pub score: f64,
}

pub fn register_params(store: &mut ParamStore, init: &Initializer, d: usize) {
    store.insert("sel.node.w", init.xavier("sel.node.w", d, 1), ParamGroup::Others);
    store.insert("sel.edge.w", init.xavier("sel.edge.w", 2 * d, 1), ParamGroup::Others);
}

/// Raw node selection logits, one per span row of `s`. The selection score
/// of the model is the sigmoid of these.
pub fn node_logits(tape: &mut Tape, binder: &mut Binder, store: &ParamStore, s: Var) -> Var {
    let w = binder.var(tape, store, "sel.node.w");
    tape.matmul(s, w)
}

/// Sigmoid node scores in (0, 1).
pub fn node_scores(tape: &mut Tape, logits: Var) -> Var {
    tape.sigmoid(logits)
}

/// All ordered pairs (source, target) over `n` items, source != target,
/// in row-major order. Self-pairs are excluded: a relation between
/// identical spans is ill-formed.
pub fn ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(n.saturating_sub(1) * n);
    for a in 0..n {
        for b in 0..n {
            if a != b {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

/// Raw edge selection scores for the given ordered pairs of node rows.
/// These stay raw logits: the selection rule only needs ranking and the
/// training loss applies the sigmoid in logit space.
pub fn edge_logits(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    node_reprs: Var,
    pairs: &[(usize, usize)],
) -> Var {
    let sources: Vec<usize> = pairs.iter().map(|&(a, _)| a).collect();
    let targets: Vec<usize> = pairs.iter().map(|&(_, b)| b).collect();
    let src = tape.gather_rows(node_reprs, &sources);
    let tgt = tape.gather_rows(node_reprs, &targets);
    let cat = tape.concat_cols(src, tgt);
    let w = binder.var(tape, store, "sel.edge.w");
    tape.matmul(cat, w)
}

/// Indices of the `k` largest scores, in descending score order. Ties are
/// broken by input order, which for the lexicographically enumerated span
/// list means earlier start first, then shorter width.
pub fn select_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    idx.truncate(k.min(scores.len()));
    idx
}

/// Assemble the initial graph from computed scores and selections.
pub fn assemble(
    spans: &[Span],
    node_sel: &[usize],
    node_logit_values: &[f64],
    pairs: &[(usize, usize)],
    edge_sel: &[usize],
    edge_logit_values: &[f64],
) -> InitialGraph {
    let nodes = node_sel
        .iter()
        .map(|&i| GraphNode { span: spans[i], score: num::sigmoid(node_logit_values[i]) })
        .collect();
    let edges = edge_sel
        .iter()
        .map(|&p| GraphEdge { source: pairs[p].0, target: pairs[p].1, score: edge_logit_values[p] })
        .collect();
    InitialGraph { nodes, edges }
}

impl InitialGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Check structural invariants (endpoint range, no self-loops, no
    /// duplicate directed pairs).
    pub fn check(&self) -> bool {
        let n = self.nodes.len();
        let mut seen = alloc::collections::BTreeSet::new();
        self.edges.iter().all(|e| {
            e.source < n && e.target < n && e.source != e.target && seen.insert((e.source, e.target))
        })
    }
}
