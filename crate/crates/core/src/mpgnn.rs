//! Message-passing baselines (GCN, GAT, SAGE) that substitute for the graph
//! transformer. Each layer updates a node from its incoming neighbors:
//! z_n' = relu(W_self z_n + W_nb agg_n + b), where the three variants differ
//! only in how agg_n pools messages. Edge states for the downstream heads
//! are derived from endpoint node states with a learned projection, so the
//! edit and classification layers are backend-agnostic.

use alloc::format;
use alloc::vec::Vec;

use crate::autograd::{Tape, Var};
use crate::config::Backend;
use crate::graph::InitialGraph;
use crate::matrix::Matrix;
use crate::params::{Binder, Initializer, ParamGroup, ParamStore};

#[derive(Debug, Clone, Copy)]
pub struct MessagePassingConfig {
    pub variant: Backend,
    pub layers: usize,
    /// Also deliver messages against edge direction.
    pub undirected_messages: bool,
}

pub fn register_params(
    store: &mut ParamStore,
    init: &Initializer,
    cfg: &MessagePassingConfig,
    d: usize,
) {
    for l in 0..cfg.layers {
        let p = format!("mp.l{l}");
        store.insert(&format!("{p}.w_self"), init.xavier(&format!("{p}.w_self"), d, d), ParamGroup::Others);
        store.insert(&format!("{p}.w_nb"), init.xavier(&format!("{p}.w_nb"), d, d), ParamGroup::Others);
        store.insert(&format!("{p}.b"), init.zeros(&format!("{p}.b"), 1, d), ParamGroup::Others);
        if cfg.variant == Backend::Gat {
            store.insert(&format!("{p}.msg.w"), init.xavier(&format!("{p}.msg.w"), d, d), ParamGroup::Others);
            store.insert(&format!("{p}.att.src"), init.xavier(&format!("{p}.att.src"), d, 1), ParamGroup::Others);
            store.insert(&format!("{p}.att.dst"), init.xavier(&format!("{p}.att.dst"), d, 1), ParamGroup::Others);
        }
    }
    store.insert("mp.edge.w", init.xavier("mp.edge.w", 2 * d, d), ParamGroup::Others);
    store.insert("mp.edge.b", init.zeros("mp.edge.b", 1, d), ParamGroup::Others);
}

/// Directed incoming-neighbor lists: `incoming[n]` holds the sources m of
/// every edge m -> n.
fn incoming_lists(graph: &InitialGraph, undirected: bool) -> Vec<Vec<usize>> {
    let mut incoming = alloc::vec![Vec::new(); graph.num_nodes()];
    for e in &graph.edges {
        incoming[e.target].push(e.source);
        if undirected {
            incoming[e.source].push(e.target);
        }
    }
    incoming
}

/// Degree-normalized adjacency for GCN: A[n][m] = 1/sqrt(din(n) dout(m)),
/// or row-mean adjacency for SAGE: A[n][m] = 1/din(n). Nodes without
/// incoming edges keep an all-zero row and aggregate the zero message.
fn aggregation_matrix(graph: &InitialGraph, variant: Backend, undirected: bool) -> Matrix {
    let n = graph.num_nodes();
    let incoming = incoming_lists(graph, undirected);
    let mut out_degree = alloc::vec![0usize; n];
    for list in &incoming {
        for &m in list {
            out_degree[m] += 1;
        }
    }
    let mut a = Matrix::zeros(n, n);
    for (node, list) in incoming.iter().enumerate() {
        let din = list.len();
        for &m in list {
            let w = match variant {
                Backend::Gcn => {
                    1.0 / crate::num::sqrt((din.max(1) * out_degree[m].max(1)) as f64)
                }
                Backend::Sage => 1.0 / din.max(1) as f64,
                _ => unreachable!("aggregation_matrix is for gcn/sage"),
            };
            a.set(node, m, a.get(node, m) + w);
        }
    }
    a
}

/// Binary incoming-edge mask for GAT attention rows.
fn incoming_mask(graph: &InitialGraph, undirected: bool) -> Matrix {
    let n = graph.num_nodes();
    let mut mask = Matrix::zeros(n, n);
    for (node, list) in incoming_lists(graph, undirected).iter().enumerate() {
        for &m in list {
            mask.set(node, m, 1.0);
        }
    }
    mask
}

/// Run `cfg.layers` message-passing updates over the node states.
pub fn mp_forward(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    cfg: &MessagePassingConfig,
    graph: &InitialGraph,
    node_states: Var,
) -> Var {
    let n = graph.num_nodes();
    assert_eq!(tape.value(node_states).rows(), n, "node states misaligned with graph");
    let mut x = node_states;
    for l in 0..cfg.layers {
        let p = format!("mp.l{l}");
        let agg = match cfg.variant {
            Backend::Gcn | Backend::Sage => {
                let a = tape.constant(aggregation_matrix(graph, cfg.variant, cfg.undirected_messages));
                tape.matmul(a, x)
            }
            Backend::Gat => {
                // Single-head attention over incoming neighbors:
                // e(n, m) = leakyrelu(a_dst . msg_n + a_src . msg_m),
                // normalized over each node's incoming set.
                let w_msg = binder.var(tape, store, &format!("{p}.msg.w"));
                let msg = tape.matmul(x, w_msg);
                let a_src = binder.var(tape, store, &format!("{p}.att.src"));
                let a_dst = binder.var(tape, store, &format!("{p}.att.dst"));
                let src_term = tape.matmul(msg, a_src); // (n,1), node m as source
                let dst_term = tape.matmul(msg, a_dst); // (n,1), node n as target
                let ones_row = tape.constant(Matrix::filled(1, n, 1.0));
                let ones_col = tape.constant(Matrix::filled(n, 1, 1.0));
                let dst_grid = tape.matmul(dst_term, ones_row); // row r constant = dst_term[r]
                let src_row = tape.transpose(src_term);
                let src_grid = tape.matmul(ones_col, src_row); // col c constant = src_term[c]
                let raw = tape.add(dst_grid, src_grid);
                let act = tape.leaky_relu(raw, 0.2);
                let attn =
                    tape.masked_softmax_rows(act, incoming_mask(graph, cfg.undirected_messages));
                tape.matmul(attn, msg)
            }
            Backend::Transformer => unreachable!("transformer handled elsewhere"),
        };
        let w_self = binder.var(tape, store, &format!("{p}.w_self"));
        let w_nb = binder.var(tape, store, &format!("{p}.w_nb"));
        let b = binder.var(tape, store, &format!("{p}.b"));
        let own = tape.matmul(x, w_self);
        let nbr = tape.matmul(agg, w_nb);
        let sum = tape.add(own, nbr);
        let pre = tape.add_bias(sum, b);
        x = tape.relu(pre);
    }
    x
}

/// Edge states for the downstream heads: learned projection of the
/// concatenated (ordered) endpoint states.
pub fn derive_edge_states(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    graph: &InitialGraph,
    node_states: Var,
) -> Var {
    let srcs: Vec<usize> = graph.edges.iter().map(|e| e.source).collect();
    let tgts: Vec<usize> = graph.edges.iter().map(|e| e.target).collect();
    let s = tape.gather_rows(node_states, &srcs);
    let t = tape.gather_rows(node_states, &tgts);
    let cat = tape.concat_cols(s, t);
    let w = binder.var(tape, store, "mp.edge.w");
    let b = binder.var(tape, store, "mp.edge.b");
    let proj = tape.matmul(cat, w);
    tape.add_bias(proj, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Span;
    use crate::graph::{GraphEdge, GraphNode};

    fn graph(n: usize, edges: &[(usize, usize)]) -> InitialGraph {
        InitialGraph {
            nodes: (0..n)
                .map(|i| GraphNode { span: Span::new(i, i), score: 1.0 })
                .collect(),
            edges: edges
                .iter()
                .map(|&(s, t)| GraphEdge { source: s, target: t, score: 0.0 })
                .collect(),
        }
    }

    fn cfg(variant: Backend) -> MessagePassingConfig {
        MessagePassingConfig { variant, layers: 1, undirected_messages: false }
    }

    fn setup(variant: Backend, d: usize) -> ParamStore {
        let mut store = ParamStore::new();
        let init = Initializer::new(21);
        register_params(&mut store, &init, &cfg(variant), d);
        store
    }

    fn eye(d: usize) -> Matrix {
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m.set(i, i, 1.0);
        }
        m
    }

    #[test]
    fn isolated_node_aggregates_zero() {
        // Node 1 has no incoming edges: with identity transforms its update
        // depends on the self term only.
        let d = 3;
        let mut store = setup(Backend::Gcn, d);
        store.get_mut("mp.l0.w_self").value = eye(d);
        store.get_mut("mp.l0.w_nb").value = eye(d);
        let g = graph(2, &[(1, 0)]); // edge 1 -> 0, so node 1 is isolated
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let x = tape.constant(Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]));
        let out = mp_forward(&mut tape, &mut binder, &store, &cfg(Backend::Gcn), &g, x);
        // Node 1: relu(z_1 + 0) = z_1.
        assert_eq!(tape.value(out).row(1), &[4.0, 5.0, 6.0]);
        // Node 0: relu(z_0 + 1/sqrt(1*1) z_1).
        assert_eq!(tape.value(out).row(0), &[5.0, 7.0, 9.0]);
    }

    #[test]
    fn two_node_hand_message() {
        // m -> n with identity transforms and mean aggregation (SAGE):
        // z_n' = relu(z_n + mean(z_m)) computed by hand.
        let d = 2;
        let mut store = setup(Backend::Sage, d);
        store.get_mut("mp.l0.w_self").value = eye(d);
        store.get_mut("mp.l0.w_nb").value = eye(d);
        let g = graph(2, &[(0, 1)]); // 0 -> 1
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let x = tape.constant(Matrix::from_rows(&[&[0.5, -1.0], &[2.0, 0.25]]));
        let out = mp_forward(&mut tape, &mut binder, &store, &cfg(Backend::Sage), &g, x);
        assert_eq!(tape.value(out).row(1), &[2.5, 0.0]); // relu(2.0+0.5, 0.25-1.0)
        assert_eq!(tape.value(out).row(0), &[0.5, 0.0]);
    }

    #[test]
    fn variants_are_permutation_equivariant() {
        let d = 4;
        for variant in [Backend::Gcn, Backend::Gat, Backend::Sage] {
            let store = setup(variant, d);
            let edges = [(0, 1), (2, 1), (1, 3), (3, 0)];
            let perm = [2usize, 0, 3, 1]; // new index of old node i is perm.position(i)
            let g = graph(4, &edges);
            // Relabeled graph: node i becomes position(i).
            let pos = |i: usize| perm.iter().position(|&p| p == i).unwrap();
            let relabeled: Vec<(usize, usize)> =
                edges.iter().map(|&(s, t)| (pos(s), pos(t))).collect();
            let g2 = graph(4, &relabeled);
            let mut rng = crate::rng::SeededRng::new(9);
            let mut x = Matrix::zeros(4, d);
            for v in x.data_mut() {
                *v = rng.normal();
            }
            let run = |g: &InitialGraph, input: &Matrix| {
                let mut tape = Tape::new();
                let mut binder = Binder::new();
                let xv = tape.constant(input.clone());
                let out = mp_forward(&mut tape, &mut binder, &store, &cfg(variant), g, xv);
                tape.value(out).clone()
            };
            let direct = run(&g, &x);
            let x2 = x.gather_rows(&perm);
            let permuted = run(&g2, &x2);
            for new in 0..4 {
                let old = perm[new];
                let a = permuted.row(new);
                let b = direct.row(old);
                for (p, q) in a.iter().zip(b) {
                    assert!((p - q).abs() < 1e-10, "{variant:?} node {new}");
                }
            }
        }
    }

    #[test]
    fn edge_states_from_zero_inputs_equal_bias() {
        let d = 3;
        let mut store = setup(Backend::Gcn, d);
        store.get_mut("mp.edge.b").value = Matrix::row_vector(&[0.1, 0.2, 0.3]);
        let g = graph(2, &[(0, 1), (1, 0)]);
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let x = tape.constant(Matrix::zeros(2, d));
        let e = derive_edge_states(&mut tape, &mut binder, &store, &g, x);
        assert_eq!(tape.value(e).shape(), (2, 3));
        assert_eq!(tape.value(e).row(0), &[0.1, 0.2, 0.3]);
        assert_eq!(tape.value(e).row(1), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn edge_states_are_direction_sensitive() {
        let d = 2;
        let store = setup(Backend::Gcn, d);
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let x = tape.constant(Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let g_fwd = graph(2, &[(0, 1)]);
        let g_rev = graph(2, &[(1, 0)]);
        let e1 = derive_edge_states(&mut tape, &mut binder, &store, &g_fwd, x);
        let e2 = derive_edge_states(&mut tape, &mut binder, &store, &g_rev, x);
        assert_ne!(tape.value(e1).row(0), tape.value(e2).row(0));
    }
}
