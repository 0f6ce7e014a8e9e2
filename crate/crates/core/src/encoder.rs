//! Contextual token embeddings and span representations.
//!
//! Two backbones sit behind the same interface: a `toy` backbone (trainable
//! hashed embedding table plus positional table and one self-attention
//! mixing layer) that runs everything on CPU, and an `adapter` backbone that
//! delegates to an externally registered contextual-embedding provider and
//! projects its output to width D.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autograd::{Tape, Var};
use crate::config::{Backbone, EncoderConfig};
use crate::data::Span;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{self, Dropout};
use crate::num;
use crate::params::{Binder, Initializer, ParamGroup, ParamStore};
use crate::rng::token_bucket;

/// Externally supplied contextual embeddings (one row per token).
pub trait ContextualProvider {
    fn width(&self) -> usize;
    fn embed(&self, tokens: &[String]) -> Result<Matrix>;
}

pub fn register_params(store: &mut ParamStore, init: &Initializer, cfg: &EncoderConfig) {
    let d = cfg.hidden_size;
    match cfg.backbone {
        Backbone::Toy => {
            store.insert(
                "enc.embed",
                init.normal("enc.embed", cfg.toy_vocab_size, d, 0.2),
                ParamGroup::Backbone,
            );
            store.insert(
                "enc.pos",
                init.normal("enc.pos", cfg.max_positions, d, 0.1),
                ParamGroup::Backbone,
            );
            for name in ["enc.mix.wq", "enc.mix.wk", "enc.mix.wv", "enc.mix.wo"] {
                store.insert(name, init.xavier(name, d, d), ParamGroup::Backbone);
            }
        }
        Backbone::Adapter => {
            let width = if cfg.adapter_width == 0 { d } else { cfg.adapter_width };
            store.insert(
                "enc.adapter.proj",
                init.xavier("enc.adapter.proj", width, d),
                ParamGroup::Backbone,
            );
        }
    }
}

/// Contextual embeddings H (one row per token).
pub fn embed_tokens(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    cfg: &EncoderConfig,
    tokens: &[String],
    provider: Option<&dyn ContextualProvider>,
) -> Result<Var> {
    if tokens.len() > cfg.max_positions {
        return Err(Error::SentenceTooLong { len: tokens.len(), cap: cfg.max_positions });
    }
    match cfg.backbone {
        Backbone::Toy => {
            let ids: Vec<usize> =
                tokens.iter().map(|t| token_bucket(t, cfg.toy_vocab_size)).collect();
            let table = binder.var(tape, store, "enc.embed");
            let pos_table = binder.var(tape, store, "enc.pos");
            let word = tape.gather_rows(table, &ids);
            let positions: Vec<usize> = (0..tokens.len()).collect();
            let pos = tape.gather_rows(pos_table, &positions);
            let x = tape.add(word, pos);
            Ok(mixing_layer(tape, binder, store, cfg.hidden_size, x))
        }
        Backbone::Adapter => {
            let provider = provider.ok_or(Error::AdapterUnavailable)?;
            let raw = provider.embed(tokens)?;
            if raw.rows() != tokens.len() {
                return Err(Error::Dimension(alloc::format!(
                    "provider returned {} rows for {} tokens",
                    raw.rows(),
                    tokens.len()
                )));
            }
            let h = tape.constant(raw);
            let proj = binder.var(tape, store, "enc.adapter.proj");
            Ok(tape.matmul(h, proj))
        }
    }
}

/// One single-head self-attention layer with a residual connection.
fn mixing_layer(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    d: usize,
    x: Var,
) -> Var {
    let wq = binder.var(tape, store, "enc.mix.wq");
    let wk = binder.var(tape, store, "enc.mix.wk");
    let wv = binder.var(tape, store, "enc.mix.wv");
    let wo = binder.var(tape, store, "enc.mix.wo");
    let q = tape.matmul(x, wq);
    let k = tape.matmul(x, wk);
    let v = tape.matmul(x, wv);
    let scores = tape.matmul_nt(q, k);
    let scaled = tape.scale(scores, 1.0 / num::sqrt(d as f64));
    let attn = tape.softmax_rows(scaled);
    let ctx = tape.matmul(attn, v);
    let mixed = tape.matmul(ctx, wo);
    tape.add(x, mixed)
}

pub fn register_span_ffn(store: &mut ParamStore, init: &Initializer, d: usize) {
    nn::register_ffn(store, init, "span.ffn", 2 * d, d, d, ParamGroup::Others);
}

/// Span representations: a two-layer feed-forward network over the
/// concatenated start-token and end-token embeddings, one row per span.
pub fn span_repr(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    h: Var,
    spans: &[Span],
    drop: &mut Dropout,
) -> Result<Var> {
    let len = tape.value(h).rows();
    let mut starts = Vec::with_capacity(spans.len());
    let mut ends = Vec::with_capacity(spans.len());
    for s in spans {
        if s.end >= len {
            return Err(Error::Validation(alloc::format!(
                "span ({}, {}) out of range for {len} tokens",
                s.start, s.end
            )));
        }
        starts.push(s.start);
        ends.push(s.end);
    }
    let hs = tape.gather_rows(h, &starts);
    let he = tape.gather_rows(h, &ends);
    let cat = tape.concat_cols(hs, he);
    Ok(nn::ffn(tape, binder, store, "span.ffn", cat, drop))
}
