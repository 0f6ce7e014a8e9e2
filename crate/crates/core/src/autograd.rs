//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] is a write-once list of operations built during one forward
//! pass. Values are computed eagerly; [`Tape::backward`] walks the list in
//! reverse and accumulates gradients. Every model forward pass in this crate
//! builds one tape per sentence, which keeps gradient accumulation across a
//! batch trivially deterministic.

use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::num;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    /// x (m,n) + bias (1,n) broadcast over rows.
    AddBias(Var, Var),
    Matmul(Var, Var),
    /// a * b^T
    MatmulNT(Var, Var),
    Transpose(Var),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    SoftmaxRows(Var),
    /// Row softmax restricted to positions where mask != 0; fully masked
    /// rows yield an all-zero output row.
    MaskedSoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var },
    Dropout { x: Var, mask: Matrix, keep: f64 },
    SumAll(Var),
    /// Sum of stable elementwise BCE between {0,1} targets and logits.
    BceWithLogitsSum { logits: Var, targets: Matrix },
    /// Sum of per-row cross-entropy between integer labels and logit rows.
    CeWithLogitsSum { logits: Var, labels: Vec<usize> },
}

pub struct Tape {
    values: Vec<Matrix>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self { values: Vec::new(), ops: Vec::new(), needs_grad: Vec::new() }
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        Var(self.values.len() - 1)
    }

    fn wants(&self, v: Var) -> bool {
        self.needs_grad[v.0]
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.values[v.0]
    }

    /// Differentiable input (parameters, or inputs whose gradient is needed).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable input (data, masks, fixed aggregation matrices).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).add(self.value(b));
        let ng = self.wants(a) || self.wants(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).sub(self.value(b));
        let ng = self.wants(a) || self.wants(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).hadamard(self.value(b));
        let ng = self.wants(a) || self.wants(b);
        self.push(v, Op::Hadamard(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).scale(k);
        let ng = self.wants(a);
        self.push(v, Op::Scale(a, k), ng)
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (xm, bm) = (self.value(x), self.value(bias));
        assert_eq!(bm.rows(), 1, "bias must be a row vector");
        assert_eq!(xm.cols(), bm.cols(), "bias width mismatch");
        let mut out = xm.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(bm.row(0)) {
                *o += b;
            }
        }
        let ng = self.wants(x) || self.wants(bias);
        self.push(out, Op::AddBias(x, bias), ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let ng = self.wants(a) || self.wants(b);
        self.push(v, Op::Matmul(a, b), ng)
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_nt(self.value(b));
        let ng = self.wants(a) || self.wants(b);
        self.push(v, Op::MatmulNT(a, b), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let ng = self.wants(a);
        self.push(v, Op::Transpose(a), ng)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (am, bm) = (self.value(a), self.value(b));
        assert_eq!(am.rows(), bm.rows(), "concat_cols row mismatch");
        let (rows, ac, bc) = (am.rows(), am.cols(), bm.cols());
        let mut data = Vec::with_capacity(rows * (ac + bc));
        for r in 0..rows {
            data.extend_from_slice(am.row(r));
            data.extend_from_slice(bm.row(r));
        }
        let v = Matrix::new(rows, ac + bc, data);
        let ng = self.wants(a) || self.wants(b);
        self.push(v, Op::ConcatCols(a, b), ng)
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).vstack(self.value(b));
        let ng = self.wants(a) || self.wants(b);
        self.push(v, Op::ConcatRows(a, b), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let am = self.value(a);
        assert!(start + len <= am.cols(), "slice_cols out of range");
        let mut data = Vec::with_capacity(am.rows() * len);
        for r in 0..am.rows() {
            data.extend_from_slice(&am.row(r)[start..start + len]);
        }
        let v = Matrix::new(am.rows(), len, data);
        let ng = self.wants(a);
        self.push(v, Op::SliceCols(a, start, len), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let am = self.value(a);
        assert!(start + len <= am.rows(), "slice_rows out of range");
        let mut data = Vec::with_capacity(len * am.cols());
        for r in start..start + len {
            data.extend_from_slice(am.row(r));
        }
        let v = Matrix::new(len, am.cols(), data);
        let ng = self.wants(a);
        self.push(v, Op::SliceRows(a, start, len), ng)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let v = self.value(a).gather_rows(idx);
        let ng = self.wants(a);
        self.push(v, Op::GatherRows(a, idx.to_vec()), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let ng = self.wants(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let ng = self.wants(a);
        self.push(v, Op::LeakyRelu(a, slope), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(num::sigmoid);
        let ng = self.wants(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let am = self.value(a);
        let mut out = am.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let ng = self.wants(a);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    pub fn masked_softmax_rows(&mut self, a: Var, mask: Matrix) -> Var {
        let am = self.value(a);
        assert_eq!(am.shape(), mask.shape(), "mask shape mismatch");
        let mut out = Matrix::zeros(am.rows(), am.cols());
        for r in 0..am.rows() {
            let m_row = mask.row(r);
            if m_row.iter().all(|&m| m == 0.0) {
                continue;
            }
            let mut max = f64::NEG_INFINITY;
            for (&x, &m) in am.row(r).iter().zip(m_row) {
                if m != 0.0 && x > max {
                    max = x;
                }
            }
            let mut total = 0.0;
            for c in 0..am.cols() {
                if m_row[c] != 0.0 {
                    let e = num::exp(am.get(r, c) - max);
                    out.set(r, c, e);
                    total += e;
                }
            }
            for c in 0..am.cols() {
                out.set(r, c, out.get(r, c) / total);
            }
        }
        let ng = self.wants(a);
        self.push(out, Op::MaskedSoftmaxRows(a), ng)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (xm, gm, bm) = (self.value(x), self.value(gain), self.value(bias));
        assert_eq!(gm.shape(), (1, xm.cols()), "layer_norm gain shape");
        assert_eq!(bm.shape(), (1, xm.cols()), "layer_norm bias shape");
        let mut out = Matrix::zeros(xm.rows(), xm.cols());
        for r in 0..xm.rows() {
            let (mean, inv_std) = row_moments(xm.row(r));
            for c in 0..xm.cols() {
                let xhat = (xm.get(r, c) - mean) * inv_std;
                out.set(r, c, xhat * gm.get(0, c) + bm.get(0, c));
            }
        }
        let ng = self.wants(x) || self.wants(gain) || self.wants(bias);
        self.push(out, Op::LayerNorm { x, gain, bias }, ng)
    }

    /// Inverted dropout with a caller-supplied {0,1} mask.
    pub fn dropout(&mut self, x: Var, mask: Matrix, keep: f64) -> Var {
        let xm = self.value(x);
        assert_eq!(xm.shape(), mask.shape(), "dropout mask shape mismatch");
        assert!(keep > 0.0);
        let mut out = xm.hadamard(&mask);
        out = out.scale(1.0 / keep);
        let ng = self.wants(x);
        self.push(out, Op::Dropout { x, mask, keep }, ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        let ng = self.wants(a);
        self.push(v, Op::SumAll(a), ng)
    }

    pub fn bce_with_logits_sum(&mut self, logits: Var, targets: Matrix) -> Var {
        let lm = self.value(logits);
        assert_eq!(lm.shape(), targets.shape(), "bce target shape mismatch");
        let mut total = 0.0;
        for (&x, &t) in lm.data().iter().zip(targets.data()) {
            total += num::bce_with_logit(x, t);
        }
        let ng = self.wants(logits);
        self.push(Matrix::scalar(total), Op::BceWithLogitsSum { logits, targets }, ng)
    }

    pub fn ce_with_logits_sum(&mut self, logits: Var, labels: &[usize]) -> Var {
        let lm = self.value(logits);
        assert_eq!(lm.rows(), labels.len(), "ce label count mismatch");
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = lm.row(r);
            assert!(label < row.len(), "ce label out of range");
            total += num::log_sum_exp(row) - row[label];
        }
        let ng = self.wants(logits);
        self.push(Matrix::scalar(total), Op::CeWithLogitsSum { logits, labels: labels.to_vec() }, ng)
    }

    /// Backpropagate from a scalar root with cotangent `seed`.
    pub fn backward_scaled(&self, root: Var, seed: f64) -> Grads {
        assert_eq!(self.value(root).shape(), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.values.len()];
        grads[root.0] = Some(Matrix::scalar(seed));
        for id in (0..=root.0).rev() {
            if !self.needs_grad[id] {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Grads { grads }
    }

    pub fn backward(&self, root: Var) -> Grads {
        self.backward_scaled(root, 1.0)
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, delta: Matrix) {
        if !self.wants(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, id: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match &self.ops[id] {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Hadamard(a, b) => {
                self.accumulate(grads, *a, g.hadamard(self.value(*b)));
                self.accumulate(grads, *b, g.hadamard(self.value(*a)));
            }
            Op::Scale(a, k) => self.accumulate(grads, *a, g.scale(*k)),
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                self.accumulate(grads, *bias, g.col_sums());
            }
            Op::Matmul(a, b) => {
                // dA = dC B^T ; dB = A^T dC
                self.accumulate(grads, *a, g.matmul_nt(self.value(*b)));
                self.accumulate(grads, *b, self.value(*a).matmul_tn(g));
            }
            Op::MatmulNT(a, b) => {
                // C = A B^T : dA = dC B ; dB = dC^T A
                self.accumulate(grads, *a, g.matmul(self.value(*b)));
                self.accumulate(grads, *b, g.matmul_tn(self.value(*a)));
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, g.transpose());
            }
            Op::ConcatCols(a, b) => {
                let ac = self.value(*a).cols();
                let bc = self.value(*b).cols();
                let rows = g.rows();
                let mut ga = Matrix::zeros(rows, ac);
                let mut gb = Matrix::zeros(rows, bc);
                for r in 0..rows {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..ac]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[ac..]);
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::ConcatRows(a, b) => {
                let ar = self.value(*a).rows();
                let br = self.value(*b).rows();
                let cols = g.cols();
                let mut ga = Matrix::zeros(ar, cols);
                let mut gb = Matrix::zeros(br, cols);
                for r in 0..ar {
                    ga.row_mut(r).copy_from_slice(g.row(r));
                }
                for r in 0..br {
                    gb.row_mut(r).copy_from_slice(g.row(ar + r));
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::SliceCols(a, start, len) => {
                let am = self.value(*a);
                let mut ga = Matrix::zeros(am.rows(), am.cols());
                for r in 0..g.rows() {
                    ga.row_mut(r)[*start..start + len].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SliceRows(a, start, len) => {
                let am = self.value(*a);
                let mut ga = Matrix::zeros(am.rows(), am.cols());
                for r in 0..*len {
                    ga.row_mut(start + r).copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *a, ga);
            }
            Op::GatherRows(a, idx) => {
                let am = self.value(*a);
                let mut ga = Matrix::zeros(am.rows(), am.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (o, &gv) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += gv;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Relu(a) => {
                let mask = self.value(*a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                self.accumulate(grads, *a, g.hadamard(&mask));
            }
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                let mask = self.value(*a).map(|x| if x > 0.0 { 1.0 } else { s });
                self.accumulate(grads, *a, g.hadamard(&mask));
            }
            Op::Sigmoid(a) => {
                let y = &self.values[id];
                let dy = y.map(|v| v * (1.0 - v));
                self.accumulate(grads, *a, g.hadamard(&dy));
            }
            Op::SoftmaxRows(a) | Op::MaskedSoftmaxRows(a) => {
                // dx = y * (g - rowdot(g, y)); zero rows stay zero.
                let y = &self.values[id];
                let mut ga = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(&a, &b)| a * b).sum();
                    for c in 0..y.cols() {
                        ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::LayerNorm { x, gain, bias } => {
                let xm = self.value(*x);
                let gm = self.value(*gain);
                let (rows, cols) = xm.shape();
                let mut gx = Matrix::zeros(rows, cols);
                let mut ggain = Matrix::zeros(1, cols);
                let mut gbias = Matrix::zeros(1, cols);
                for r in 0..rows {
                    let (mean, inv_std) = row_moments(xm.row(r));
                    let n = cols as f64;
                    let mut sum_dy = 0.0;
                    let mut sum_dy_xhat = 0.0;
                    for c in 0..cols {
                        let xhat = (xm.get(r, c) - mean) * inv_std;
                        let dy = g.get(r, c) * gm.get(0, c);
                        sum_dy += dy;
                        sum_dy_xhat += dy * xhat;
                        ggain.set(0, c, ggain.get(0, c) + g.get(r, c) * xhat);
                        gbias.set(0, c, gbias.get(0, c) + g.get(r, c));
                    }
                    for c in 0..cols {
                        let xhat = (xm.get(r, c) - mean) * inv_std;
                        let dy = g.get(r, c) * gm.get(0, c);
                        gx.set(r, c, inv_std * (dy - sum_dy / n - xhat * sum_dy_xhat / n));
                    }
                }
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *gain, ggain);
                self.accumulate(grads, *bias, gbias);
            }
            Op::Dropout { x, mask, keep } => {
                let gx = g.hadamard(mask).scale(1.0 / keep);
                self.accumulate(grads, *x, gx);
            }
            Op::SumAll(a) => {
                let am = self.value(*a);
                self.accumulate(grads, *a, Matrix::filled(am.rows(), am.cols(), g.item()));
            }
            Op::BceWithLogitsSum { logits, targets } => {
                let lm = self.value(*logits);
                let scale = g.item();
                let mut gl = Matrix::zeros(lm.rows(), lm.cols());
                for (o, (&x, &t)) in gl
                    .data_mut()
                    .iter_mut()
                    .zip(lm.data().iter().zip(targets.data()))
                {
                    *o = scale * (num::sigmoid(x) - t);
                }
                self.accumulate(grads, *logits, gl);
            }
            Op::CeWithLogitsSum { logits, labels } => {
                let lm = self.value(*logits);
                let scale = g.item();
                let mut gl = Matrix::zeros(lm.rows(), lm.cols());
                for (r, &label) in labels.iter().enumerate() {
                    let row = lm.row(r);
                    let lse = num::log_sum_exp(row);
                    for c in 0..lm.cols() {
                        let p = num::exp(row[c] - lse);
                        let onehot = if c == label { 1.0 } else { 0.0 };
                        gl.set(r, c, scale * (p - onehot));
                    }
                }
                self.accumulate(grads, *logits, gl);
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| if b > a { b } else { a });
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = num::exp(*v - max);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn row_moments(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / num::sqrt(var + LAYER_NORM_EPS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    /// Central finite differences of a scalar-valued rebuildable function.
    fn finite_diff(
        inputs: &[Matrix],
        build: &dyn Fn(&mut Tape, &[Var]) -> Var,
        eps: f64,
    ) -> Vec<Matrix> {
        let eval = |inputs: &[Matrix]| -> f64 {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
            let root = build(&mut tape, &vars);
            tape.value(root).item()
        };
        let mut out = Vec::new();
        for (i, m) in inputs.iter().enumerate() {
            let mut g = Matrix::zeros(m.rows(), m.cols());
            for k in 0..m.len() {
                let mut plus = inputs.to_vec();
                plus[i].data_mut()[k] += eps;
                let mut minus = inputs.to_vec();
                minus[i].data_mut()[k] -= eps;
                g.data_mut()[k] = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            }
            out.push(g);
        }
        out
    }

    fn check(inputs: &[Matrix], build: &dyn Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
        let root = build(&mut tape, &vars);
        let grads = tape.backward(root);
        let numeric = finite_diff(inputs, build, 1e-6);
        for (i, var) in vars.iter().enumerate() {
            let analytic = grads.get(*var).expect("missing gradient");
            let scale = numeric[i].max_abs().max(analytic.max_abs()).max(1.0);
            let diff = analytic.max_abs_diff(&numeric[i]);
            assert!(
                diff / scale < 1e-6,
                "input {i}: rel diff {} (analytic vs numeric)",
                diff / scale
            );
        }
    }

    fn randn(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = rng.normal();
        }
        m
    }

    #[test]
    fn grad_matmul_chain() {
        let mut rng = SeededRng::new(1);
        let a = randn(&mut rng, 3, 4);
        let b = randn(&mut rng, 4, 2);
        let c = randn(&mut rng, 3, 2);
        check(&[a, b, c], &|t, v| {
            let p = t.matmul(v[0], v[1]);
            let q = t.hadamard(p, v[2]);
            t.sum_all(q)
        });
    }

    #[test]
    fn grad_attention_like_block() {
        let mut rng = SeededRng::new(2);
        let x = randn(&mut rng, 4, 6);
        let wq = randn(&mut rng, 6, 6);
        let wk = randn(&mut rng, 6, 6);
        let wv = randn(&mut rng, 6, 6);
        check(&[x, wq, wk, wv], &|t, v| {
            let q = t.matmul(v[0], v[1]);
            let k = t.matmul(v[0], v[2]);
            let val = t.matmul(v[0], v[3]);
            let scores = t.matmul_nt(q, k);
            let scaled = t.scale(scores, 1.0 / num::sqrt(6.0));
            let attn = t.softmax_rows(scaled);
            let ctx = t.matmul(attn, val);
            t.sum_all(ctx)
        });
    }

    #[test]
    fn grad_layer_norm() {
        let mut rng = SeededRng::new(3);
        let x = randn(&mut rng, 3, 5);
        let gain = randn(&mut rng, 1, 5);
        let bias = randn(&mut rng, 1, 5);
        let probe = randn(&mut rng, 3, 5);
        check(&[x, gain, bias], &|t, v| {
            let y = t.layer_norm(v[0], v[1], v[2]);
            let c = t.constant(probe.clone());
            let z = t.hadamard(y, c);
            t.sum_all(z)
        });
    }

    #[test]
    fn grad_losses() {
        let mut rng = SeededRng::new(4);
        let logits = randn(&mut rng, 4, 3);
        let bce_logits = randn(&mut rng, 5, 1);
        let targets = Matrix::col_vector(&[1.0, 0.0, 1.0, 1.0, 0.0]);
        check(&[logits.clone()], &|t, v| t.ce_with_logits_sum(v[0], &[2, 0, 1, 1]));
        check(&[bce_logits], &|t, v| t.bce_with_logits_sum(v[0], targets.clone()));
    }

    #[test]
    fn grad_structure_ops() {
        let mut rng = SeededRng::new(5);
        let a = randn(&mut rng, 3, 4);
        let b = randn(&mut rng, 2, 4);
        let probe = randn(&mut rng, 4, 5);
        check(&[a, b], &|t, v| {
            let stacked = t.concat_rows(v[0], v[1]);
            let picked = t.gather_rows(stacked, &[0, 4, 4, 2]);
            let side = t.slice_cols(picked, 1, 2);
            let wide = t.concat_cols(side, side);
            let c = t.constant(probe.clone());
            let scored = t.matmul(wide, c);
            let act = t.leaky_relu(scored, 0.2);
            t.sum_all(act)
        });
    }

    #[test]
    fn grad_masked_softmax() {
        let mut rng = SeededRng::new(6);
        let x = randn(&mut rng, 3, 3);
        let mask = Matrix::from_rows(&[
            &[1.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0],
        ]);
        let probe = randn(&mut rng, 3, 3);
        check(&[x], &|t, v| {
            let y = t.masked_softmax_rows(v[0], mask.clone());
            let c = t.constant(probe.clone());
            let z = t.hadamard(y, c);
            t.sum_all(z)
        });
    }

    #[test]
    fn masked_softmax_zeroes_empty_rows() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let mask = Matrix::from_rows(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let y = tape.masked_softmax_rows(x, mask);
        assert_eq!(tape.value(y).row(0), &[0.0, 0.0]);
        let s: f64 = tape.value(y).row(1).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
