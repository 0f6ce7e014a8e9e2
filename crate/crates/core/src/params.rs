//! Named trainable parameters and their binding into forward tapes.
//!
//! Parameters live in a [`ParamStore`] keyed by dotted module path
//! (`span.ffn.w1`, `gt.l0.attn.wq`, ...). A [`Binder`] lazily copies each
//! parameter onto a tape the first time a forward pass touches it and
//! remembers the mapping so gradients can be routed back after `backward`.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autograd::{Grads, Tape, Var};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

/// Optimizer group: backbone parameters follow `lr_backbone`, everything
/// else follows `lr_others`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Others,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
    pub group: ParamGroup,
    /// Frozen parameters keep receiving gradients but are never updated.
    pub frozen: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    map: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Matrix, group: ParamGroup) {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.map.insert(name.to_owned(), Param { value, grad, group, frozen: false });
    }

    pub fn freeze(&mut self, name: &str) {
        if let Some(p) = self.map.get_mut(name) {
            p.frozen = true;
        }
    }

    pub fn get(&self, name: &str) -> &Param {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Param {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.map.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for p in self.map.values_mut() {
            for g in p.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    /// Global L2 norm over all gradients.
    pub fn grad_norm(&self) -> f64 {
        let mut total = 0.0;
        for p in self.map.values() {
            for &g in p.grad.data() {
                total += g * g;
            }
        }
        crate::num::sqrt(total)
    }

    /// Number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.map.values().map(|p| p.value.len()).sum()
    }
}

/// Deterministic per-parameter initializers. Each parameter draws from a
/// stream derived from (seed, name), so initialization does not depend on
/// registration order.
pub struct Initializer {
    seed: u64,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn stream(&self, name: &str) -> SeededRng {
        SeededRng::derive(self.seed, name)
    }

    pub fn normal(&self, name: &str, rows: usize, cols: usize, std: f64) -> Matrix {
        let mut rng = self.stream(name);
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = rng.normal() * std;
        }
        m
    }

    /// Gaussian init scaled by sqrt(2 / (fan_in + fan_out)).
    pub fn xavier(&self, name: &str, rows: usize, cols: usize) -> Matrix {
        let std = crate::num::sqrt(2.0 / (rows + cols) as f64);
        self.normal(name, rows, cols, std)
    }

    pub fn zeros(&self, _name: &str, rows: usize, cols: usize) -> Matrix {
        Matrix::zeros(rows, cols)
    }

    pub fn ones(&self, _name: &str, rows: usize, cols: usize) -> Matrix {
        Matrix::filled(rows, cols, 1.0)
    }

    /// Rows orthonormalized by modified Gram-Schmidt, from a seeded Gaussian.
    /// Requires `rows <= cols` so an exact orthonormal set exists.
    pub fn orthonormal_rows(&self, name: &str, rows: usize, cols: usize) -> Matrix {
        assert!(rows <= cols, "orthonormal init needs rows <= cols");
        let mut m = self.normal(name, rows, cols, 1.0);
        for i in 0..rows {
            for j in 0..i {
                let dot: f64 = m.row(i).iter().zip(m.row(j)).map(|(&a, &b)| a * b).sum();
                let prev: Vec<f64> = m.row(j).to_vec();
                for (v, p) in m.row_mut(i).iter_mut().zip(prev) {
                    *v -= dot * p;
                }
            }
            let norm = crate::num::sqrt(m.row(i).iter().map(|&x| x * x).sum());
            assert!(norm > 1e-12, "degenerate row during orthonormalization");
            for v in m.row_mut(i) {
                *v /= norm;
            }
        }
        m
    }
}

/// Tracks which parameters a forward pass bound onto its tape.
pub struct Binder {
    bound: BTreeMap<String, Var>,
}

impl Binder {
    pub fn new() -> Self {
        Self { bound: BTreeMap::new() }
    }

    /// Tape variable for a named parameter, creating the leaf on first use.
    pub fn var(&mut self, tape: &mut Tape, store: &ParamStore, name: &str) -> Var {
        if let Some(v) = self.bound.get(name) {
            return *v;
        }
        let v = tape.leaf(store.get(name).value.clone());
        self.bound.insert(name.to_owned(), v);
        v
    }

    /// Add `scale` times the tape gradients of every bound parameter into
    /// the store's gradient buffers.
    pub fn accumulate(&self, store: &mut ParamStore, grads: &Grads, scale: f64) {
        for (name, var) in &self.bound {
            if let Some(g) = grads.get(*var) {
                let p = store.get_mut(name);
                for (acc, &gv) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *acc += scale * gv;
                }
            }
        }
    }

    pub fn bound_names(&self) -> impl Iterator<Item = &String> {
        self.bound.keys()
    }
}

impl Default for Binder {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_rows_are_orthonormal() {
        let init = Initializer::new(42);
        let m = init.orthonormal_rows("pool", 6, 12);
        for i in 0..6 {
            for j in 0..6 {
                let dot: f64 = m.row(i).iter().zip(m.row(j)).map(|(&a, &b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10, "({i},{j}) dot {dot}");
            }
        }
    }

    #[test]
    fn init_is_order_independent() {
        let init = Initializer::new(9);
        let a1 = init.xavier("m.a", 3, 3);
        let b1 = init.xavier("m.b", 3, 3);
        let b2 = init.xavier("m.b", 3, 3);
        let a2 = init.xavier("m.a", 3, 3);
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn binder_routes_gradients() {
        let mut store = ParamStore::new();
        store.insert("w", Matrix::from_rows(&[&[2.0], &[3.0]]), ParamGroup::Others);
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let w = binder.var(&mut tape, &store, "w");
        let x = tape.constant(Matrix::row_vector(&[4.0, 5.0]));
        let y = tape.matmul(x, w); // 4*2 + 5*3 = 23
        let loss = tape.sum_all(y);
        assert_eq!(tape.value(loss).item(), 23.0);
        let grads = tape.backward(loss);
        binder.accumulate(&mut store, &grads, 0.5);
        assert_eq!(store.get("w").grad.data(), &[2.0, 2.5]);
    }
}
