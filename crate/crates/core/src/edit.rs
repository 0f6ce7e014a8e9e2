//! Graph editing: keep probabilities, thresholding, greedy flat decoding,
//! and edge-consistency filtering. No elements are ever added; editing only
//! keeps or drops what the initial graph contains.

use alloc::vec::Vec;

use crate::autograd::{Tape, Var};
use crate::data::Span;
use crate::params::{Binder, Initializer, ParamGroup, ParamStore};

pub fn register_params(store: &mut ParamStore, init: &Initializer, d: usize) {
    // One weight vector scores node tokens and edge tokens alike.
    store.insert("edit.w", init.xavier("edit.w", d, 1), ParamGroup::Others);
}

/// Keep logits for a block of token states (node or edge); the shared
/// weight `edit.w` is used for both.
pub fn keep_logits(tape: &mut Tape, binder: &mut Binder, store: &ParamStore, states: Var) -> Var {
    let w = binder.var(tape, store, "edit.w");
    tape.matmul(states, w)
}

pub fn keep_probabilities(tape: &mut Tape, logits: Var) -> Var {
    tape.sigmoid(logits)
}

/// Indices with probability strictly above the threshold.
pub fn threshold_indices(probs: &[f64], threshold: f64) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Greedy flat decoding: repeatedly take the highest-probability remaining
/// node whose span overlaps no already-selected span. Ties break toward the
/// earlier start, then the shorter width. Returns indices into `candidates`
/// in selection order.
pub fn greedy_flat_decode(candidates: &[(Span, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, pa) = candidates[a];
        let (sb, pb) = candidates[b];
        pb.partial_cmp(&pa)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(sa.start.cmp(&sb.start))
            .then(sa.width().cmp(&sb.width()))
            .then(a.cmp(&b))
    });
    let mut chosen: Vec<usize> = Vec::new();
    for idx in order {
        let span = candidates[idx].0;
        if chosen.iter().all(|&c| !candidates[c].0.overlaps(&span)) {
            chosen.push(idx);
        }
    }
    chosen
}

/// Drop every edge with an endpoint outside the kept node set.
pub fn enforce_consistency(kept_nodes: &[usize], edges: &[(usize, usize)], kept_edges: &[usize]) -> Vec<usize> {
    kept_edges
        .iter()
        .copied()
        .filter(|&e| {
            let (s, t) = edges[e];
            kept_nodes.contains(&s) && kept_nodes.contains(&t)
        })
        .collect()
}

/// Final structure: node and edge indices (into the initial graph) that
/// survive editing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalStructure {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

/// Full decode: threshold both sets, optionally resolve span overlaps
/// greedily, then discard edges whose endpoints were dropped.
pub fn decode_structure(
    spans: &[Span],
    node_keep: &[f64],
    edges: &[(usize, usize)],
    edge_keep: &[f64],
    threshold: f64,
    flat: bool,
) -> FinalStructure {
    let mut nodes = threshold_indices(node_keep, threshold);
    if flat {
        let candidates: Vec<(Span, f64)> =
            nodes.iter().map(|&i| (spans[i], node_keep[i])).collect();
        let picked = greedy_flat_decode(&candidates);
        let mut selected: Vec<usize> = picked.iter().map(|&p| nodes[p]).collect();
        selected.sort_unstable();
        nodes = selected;
    }
    let kept_edges = threshold_indices(edge_keep, threshold);
    let edges = enforce_consistency(&nodes, edges, &kept_edges);
    FinalStructure { nodes, edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use alloc::vec;

    #[test]
    fn zero_weight_gives_half_probability() {
        let mut store = ParamStore::new();
        store.insert("edit.w", Matrix::zeros(3, 1), ParamGroup::Others);
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let z = tape.constant(Matrix::filled(4, 3, 2.0));
        let logits = keep_logits(&mut tape, &mut binder, &store, z);
        let probs = keep_probabilities(&mut tape, logits);
        assert!(tape.value(probs).data().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn keep_probability_matches_scalar_sigmoid() {
        // w_k = (1, 1), z = (0.5, 0.5): sigma(1) ~ 0.7311
        let mut store = ParamStore::new();
        store.insert("edit.w", Matrix::col_vector(&[1.0, 1.0]), ParamGroup::Others);
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let z = tape.constant(Matrix::row_vector(&[0.5, 0.5]));
        let logits = keep_logits(&mut tape, &mut binder, &store, z);
        let probs = keep_probabilities(&mut tape, logits);
        assert!((tape.value(probs).item() - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn shared_weight_scores_nodes_and_edges_identically() {
        let mut store = ParamStore::new();
        store.insert("edit.w", Matrix::col_vector(&[0.3, -1.2]), ParamGroup::Others);
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let state = Matrix::row_vector(&[1.5, 0.25]);
        let node = tape.constant(state.clone());
        let edge = tape.constant(state);
        let nl = keep_logits(&mut tape, &mut binder, &store, node);
        let el = keep_logits(&mut tape, &mut binder, &store, edge);
        assert_eq!(tape.value(nl).item(), tape.value(el).item());
    }

    #[test]
    fn threshold_is_strictly_greater() {
        assert_eq!(threshold_indices(&[0.5], 0.5), Vec::<usize>::new());
        assert_eq!(threshold_indices(&[0.500001], 0.5), vec![0]);
        assert_eq!(threshold_indices(&[0.4, 0.49, 0.1], 0.5), Vec::<usize>::new());
    }

    #[test]
    fn greedy_resolves_overlaps_by_probability() {
        let cands = vec![
            (Span::new(0, 2), 0.9),
            (Span::new(1, 3), 0.8),
            (Span::new(4, 5), 0.7),
        ];
        let picked = greedy_flat_decode(&cands);
        assert_eq!(picked, vec![0, 2]);
    }

    #[test]
    fn greedy_keeps_all_disjoint_spans() {
        let cands = vec![
            (Span::new(4, 5), 0.1),
            (Span::new(0, 1), 0.9),
            (Span::new(2, 3), 0.5),
        ];
        let mut picked = greedy_flat_decode(&cands);
        picked.sort_unstable();
        assert_eq!(picked, vec![0, 1, 2]);
    }

    #[test]
    fn greedy_prefers_higher_probability_nested_span() {
        let cands = vec![(Span::new(0, 3), 0.6), (Span::new(1, 2), 0.9)];
        assert_eq!(greedy_flat_decode(&cands), vec![1]);
    }

    #[test]
    fn consistency_discards_dangling_edges() {
        let edges = vec![(0, 1), (1, 2), (2, 0)];
        // Node 1 dropped: edges 0 and 1 go, edge 2 stays.
        assert_eq!(enforce_consistency(&[0, 2], &edges, &[0, 1, 2]), vec![2]);
        // All endpoints kept: unchanged.
        assert_eq!(enforce_consistency(&[0, 1, 2], &edges, &[0, 2]), vec![0, 2]);
        // No nodes kept: nothing survives.
        assert_eq!(enforce_consistency(&[], &edges, &[0, 1, 2]), Vec::<usize>::new());
    }

    #[test]
    fn empty_prediction_is_valid() {
        let spans = vec![Span::new(0, 0), Span::new(1, 1)];
        let out = decode_structure(&spans, &[0.2, 0.3], &[(0, 1)], &[0.9], 0.5, true);
        assert!(out.nodes.is_empty());
        assert!(out.edges.is_empty());
    }
}
