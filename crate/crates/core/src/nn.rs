//! Small shared building blocks for forward passes: linear layers,
//! two-layer feed-forward stacks, layer norm, and dropout plumbing.

use alloc::format;

use crate::autograd::{Tape, Var};
use crate::matrix::Matrix;
use crate::params::{Binder, Initializer, ParamGroup, ParamStore};
use crate::rng::SeededRng;

/// Per-pass dropout state. `off()` disables dropout (evaluation, gradient
/// checks); otherwise masks are drawn from a pass-local stream.
pub struct Dropout {
    p: f64,
    rng: Option<SeededRng>,
}

impl Dropout {
    pub fn off() -> Self {
        Self { p: 0.0, rng: None }
    }

    pub fn new(p: f64, rng: SeededRng) -> Self {
        assert!((0.0..1.0).contains(&p));
        if p == 0.0 {
            Self::off()
        } else {
            Self { p, rng: Some(rng) }
        }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        let Some(rng) = self.rng.as_mut() else { return x };
        let keep = 1.0 - self.p;
        let (rows, cols) = tape.value(x).shape();
        let mut mask = Matrix::zeros(rows, cols);
        for v in mask.data_mut() {
            *v = rng.bernoulli(keep);
        }
        tape.dropout(x, mask, keep)
    }
}

pub fn register_linear(
    store: &mut ParamStore,
    init: &Initializer,
    prefix: &str,
    in_dim: usize,
    out_dim: usize,
    bias: bool,
    group: ParamGroup,
) {
    let w = format!("{prefix}.w");
    store.insert(&w, init.xavier(&w, in_dim, out_dim), group);
    if bias {
        let b = format!("{prefix}.b");
        store.insert(&b, init.zeros(&b, 1, out_dim), group);
    }
}

/// `x W (+ b)` for a linear registered under `prefix`.
pub fn linear(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    prefix: &str,
    x: Var,
) -> Var {
    let w = binder.var(tape, store, &format!("{prefix}.w"));
    let y = tape.matmul(x, w);
    let b_name = format!("{prefix}.b");
    if store.contains(&b_name) {
        let b = binder.var(tape, store, &b_name);
        tape.add_bias(y, b)
    } else {
        y
    }
}

pub fn register_ffn(
    store: &mut ParamStore,
    init: &Initializer,
    prefix: &str,
    in_dim: usize,
    hidden: usize,
    out_dim: usize,
    group: ParamGroup,
) {
    register_linear(store, init, &format!("{prefix}.l1"), in_dim, hidden, true, group);
    register_linear(store, init, &format!("{prefix}.l2"), hidden, out_dim, true, group);
}

/// Two-layer feed-forward: linear, rectifier, dropout, linear.
pub fn ffn(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    prefix: &str,
    x: Var,
    drop: &mut Dropout,
) -> Var {
    let h = linear(tape, binder, store, &format!("{prefix}.l1"), x);
    let a = tape.relu(h);
    let a = drop.apply(tape, a);
    linear(tape, binder, store, &format!("{prefix}.l2"), a)
}

pub fn register_layer_norm(
    store: &mut ParamStore,
    init: &Initializer,
    prefix: &str,
    dim: usize,
    group: ParamGroup,
) {
    let g = format!("{prefix}.g");
    let b = format!("{prefix}.b");
    store.insert(&g, init.ones(&g, 1, dim), group);
    store.insert(&b, init.zeros(&b, 1, dim), group);
}

pub fn layer_norm(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    prefix: &str,
    x: Var,
) -> Var {
    let g = binder.var(tape, store, &format!("{prefix}.g"));
    let b = binder.var(tape, store, &format!("{prefix}.b"));
    tape.layer_norm(x, g, b)
}
