//! Graph tokenization and the transformer that refines it.
//!
//! Every node and every edge of the initial graph becomes one input token.
//! A node token is its span representation plus its node identifier repeated
//! twice; an edge token is the concatenation of its endpoints' identifiers
//! (optionally plus a learned projection of endpoint span features). Token
//! type embeddings and an input projection produce Z^(0), which an L-layer
//! transformer refines into Z^(L). There are no positional encodings over
//! token order, so the stack is permutation-equivariant by construction.

use alloc::format;
use alloc::vec::Vec;

use crate::autograd::{Tape, Var};
use crate::config::GtConfig;
use crate::error::{Error, Result};
use crate::graph::InitialGraph;
use crate::matrix::Matrix;
use crate::nn::{self, Dropout};
use crate::num;
use crate::params::{Binder, Initializer, ParamGroup, ParamStore};
use crate::rng::SeededRng;

/// How identifier pool rows are handed to nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignMode {
    /// Sampled without replacement; used during training forward passes.
    Random,
    /// Rows 0..n in node-rank order; used at evaluation so predictions
    /// are reproducible.
    Deterministic,
}

pub fn register_params(
    store: &mut ParamStore,
    init: &Initializer,
    cfg: &GtConfig,
    d: usize,
    pool_size: usize,
) {
    store.insert(
        "gt.pool",
        init.orthonormal_rows("gt.pool", pool_size, d / 2),
        ParamGroup::Others,
    );
    if cfg.freeze_identifiers {
        store.freeze("gt.pool");
    }
    store.insert("gt.type.node", init.normal("gt.type.node", 1, d, 0.02), ParamGroup::Others);
    store.insert("gt.type.edge", init.normal("gt.type.edge", 1, d, 0.02), ParamGroup::Others);
    store.insert("gt.w_in", init.xavier("gt.w_in", d, d), ParamGroup::Others);
    if cfg.edge_features {
        store.insert(
            "gt.edgefeat.w",
            init.xavier("gt.edgefeat.w", 2 * d, d),
            ParamGroup::Others,
        );
    }
    for l in 0..cfg.layers {
        let p = format!("gt.l{l}");
        nn::register_layer_norm(store, init, &format!("{p}.ln1"), d, ParamGroup::Others);
        nn::register_layer_norm(store, init, &format!("{p}.ln2"), d, ParamGroup::Others);
        for name in ["wq", "wk", "wv", "wo"] {
            nn::register_linear(store, init, &format!("{p}.attn.{name}"), d, d, true, ParamGroup::Others);
        }
        nn::register_ffn(store, init, &format!("{p}.ffn"), d, 4 * d, d, ParamGroup::Others);
    }
    nn::register_layer_norm(store, init, "gt.ln_f", d, ParamGroup::Others);
}

/// Injective map from node rank to identifier pool row.
pub fn assign_identifiers(
    num_nodes: usize,
    pool_size: usize,
    mode: AssignMode,
    rng: &mut SeededRng,
) -> Result<Vec<usize>> {
    if num_nodes > pool_size {
        return Err(Error::PoolTooSmall { pool: pool_size, nodes: num_nodes });
    }
    Ok(match mode {
        AssignMode::Deterministic => (0..num_nodes).collect(),
        AssignMode::Random => rng.sample_distinct(pool_size, num_nodes),
    })
}

/// Token matrix Z^(0) with node rows first, then edge rows.
#[derive(Debug)]
pub struct Tokenized {
    pub z0: Var,
    pub num_nodes: usize,
    pub num_edges: usize,
}

/// Build graph tokens and apply type embeddings plus the input projection.
///
/// `node_reprs` holds one row per selected node (aligned with
/// `graph.nodes`); `assignment[i]` is the pool row of node `i`.
pub fn tokenize_graph(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    cfg: &GtConfig,
    graph: &InitialGraph,
    node_reprs: Var,
    assignment: &[usize],
) -> Result<Tokenized> {
    let n = graph.num_nodes();
    let m = graph.num_edges();
    if assignment.len() != n {
        return Err(Error::Dimension(format!(
            "assignment covers {} nodes, graph has {n}",
            assignment.len()
        )));
    }
    let d = tape.value(node_reprs).cols();
    let pool = binder.var(tape, store, "gt.pool");
    if tape.value(pool).cols() * 2 != d {
        return Err(Error::Dimension(format!(
            "identifier width {} does not match D/2 = {}",
            tape.value(pool).cols(),
            d / 2
        )));
    }

    // Node tokens: s_n + [p_n ; p_n].
    let ids = tape.gather_rows(pool, assignment);
    let ids_twice = tape.concat_cols(ids, ids);
    let node_tokens = tape.add(node_reprs, ids_twice);

    // Edge tokens: [p_source ; p_target], identifiers only, so the
    // transformer must recover the structure from identifiers alone.
    let src_rows: Vec<usize> = graph.edges.iter().map(|e| assignment[e.source]).collect();
    let tgt_rows: Vec<usize> = graph.edges.iter().map(|e| assignment[e.target]).collect();
    let src_ids = tape.gather_rows(pool, &src_rows);
    let tgt_ids = tape.gather_rows(pool, &tgt_rows);
    let mut edge_tokens = tape.concat_cols(src_ids, tgt_ids);

    if cfg.edge_features {
        // Optional variant: fold endpoint span features into edge tokens
        // through a learned 2D -> D projection.
        let srcs: Vec<usize> = graph.edges.iter().map(|e| e.source).collect();
        let tgts: Vec<usize> = graph.edges.iter().map(|e| e.target).collect();
        let s_src = tape.gather_rows(node_reprs, &srcs);
        let s_tgt = tape.gather_rows(node_reprs, &tgts);
        let cat = tape.concat_cols(s_src, s_tgt);
        let w = binder.var(tape, store, "gt.edgefeat.w");
        let feat = tape.matmul(cat, w);
        edge_tokens = tape.add(edge_tokens, feat);
    }

    let e_node = binder.var(tape, store, "gt.type.node");
    let e_edge = binder.var(tape, store, "gt.type.edge");
    let node_typed = tape.add_bias(node_tokens, e_node);
    let edge_typed = tape.add_bias(edge_tokens, e_edge);
    let stacked = tape.concat_rows(node_typed, edge_typed);
    let w_in = binder.var(tape, store, "gt.w_in");
    let z0 = tape.matmul(stacked, w_in);
    Ok(Tokenized { z0, num_nodes: n, num_edges: m })
}

/// Attention weights captured from one layer: one (T, T) matrix per head.
#[derive(Debug, Clone)]
pub struct LayerAttention {
    pub heads: Vec<Matrix>,
}

/// L pre-norm transformer blocks followed by a final layer norm.
/// Returns Z^(L) and, when `capture` is set, per-layer attention weights.
pub fn transformer_forward(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    cfg: &GtConfig,
    z0: Var,
    drop: &mut Dropout,
    capture: bool,
) -> Result<(Var, Option<Vec<LayerAttention>>)> {
    let d = tape.value(z0).cols();
    let head_dim = d / cfg.heads;
    let mut x = z0;
    let mut captured = if capture { Some(Vec::new()) } else { None };
    for l in 0..cfg.layers {
        let p = format!("gt.l{l}");
        let normed = nn::layer_norm(tape, binder, store, &format!("{p}.ln1"), x);
        let q = nn::linear(tape, binder, store, &format!("{p}.attn.wq"), normed);
        let k = nn::linear(tape, binder, store, &format!("{p}.attn.wk"), normed);
        let v = nn::linear(tape, binder, store, &format!("{p}.attn.wv"), normed);
        let mut head_outputs: Vec<Var> = Vec::with_capacity(cfg.heads);
        let mut head_attn: Vec<Matrix> = Vec::new();
        for h in 0..cfg.heads {
            let off = h * head_dim;
            let qh = tape.slice_cols(q, off, head_dim);
            let kh = tape.slice_cols(k, off, head_dim);
            let vh = tape.slice_cols(v, off, head_dim);
            let scores = tape.matmul_nt(qh, kh);
            let scaled = tape.scale(scores, 1.0 / num::sqrt(head_dim as f64));
            let attn = tape.softmax_rows(scaled);
            if captured.is_some() {
                head_attn.push(tape.value(attn).clone());
            }
            head_outputs.push(tape.matmul(attn, vh));
        }
        let mut ctx = head_outputs[0];
        for &ho in &head_outputs[1..] {
            ctx = tape.concat_cols(ctx, ho);
        }
        let projected = nn::linear(tape, binder, store, &format!("{p}.attn.wo"), ctx);
        let projected = drop.apply(tape, projected);
        let x_attn = tape.add(x, projected);

        let normed2 = nn::layer_norm(tape, binder, store, &format!("{p}.ln2"), x_attn);
        let ff = nn::ffn(tape, binder, store, &format!("{p}.ffn"), normed2, drop);
        let ff = drop.apply(tape, ff);
        x = tape.add(x_attn, ff);

        if !tape.value(x).is_finite() {
            return Err(Error::NonFinite(format!("transformer layer {l}")));
        }
        if let Some(c) = captured.as_mut() {
            c.push(LayerAttention { heads: head_attn });
        }
    }
    let out = nn::layer_norm(tape, binder, store, "gt.ln_f", x);
    Ok((out, captured))
}
