//! The four training loss components and their closed-form scalar oracles.
//!
//! All binary terms are computed in logit space (sigmoid inside the loss)
//! so nothing ever takes log(0). The total is the plain unweighted sum of
//! node selection, edge selection, edit, and classification losses.

use alloc::vec::Vec;

use crate::autograd::{Tape, Var};
use crate::matrix::Matrix;
use crate::num;

/// Scalar binary cross-entropy of a {0,1} target against a probability.
pub fn bce(target: f64, prob: f64) -> f64 {
    -(target * num::ln(prob) + (1.0 - target) * num::ln(1.0 - prob))
}

/// Scalar cross-entropy of a label index against unnormalized logits.
pub fn ce(label: usize, logits: &[f64]) -> f64 {
    num::log_sum_exp(logits) - logits[label]
}

/// Softmax of a logit slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = num::log_sum_exp(logits);
    logits.iter().map(|&x| num::exp(x - lse)).collect()
}

/// Per-sentence loss values (scalars copied off the tape for logging).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub node_select: f64,
    pub edge_select: f64,
    pub edit: f64,
    pub classify: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn zero() -> Self {
        Self { node_select: 0.0, edge_select: 0.0, edit: 0.0, classify: 0.0, total: 0.0 }
    }

    pub fn add(&mut self, other: &Self) {
        self.node_select += other.node_select;
        self.edge_select += other.edge_select;
        self.edit += other.edit;
        self.classify += other.classify;
        self.total += other.total;
    }

    pub fn scale(&mut self, k: f64) {
        self.node_select *= k;
        self.edge_select *= k;
        self.edit *= k;
        self.classify *= k;
        self.total *= k;
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.node_select.is_finite()
            && self.edge_select.is_finite()
            && self.edit.is_finite()
            && self.classify.is_finite()
    }
}

/// Node selection loss: BCE over ALL candidate spans, not just selected
/// nodes. `deltas[i]` is 1.0 iff span i is a gold entity.
pub fn loss_node_select(tape: &mut Tape, node_logits: Var, deltas: &[f64]) -> Var {
    let targets = Matrix::col_vector(deltas);
    tape.bce_with_logits_sum(node_logits, targets)
}

/// Edge selection loss: BCE over every ordered pair of selected nodes.
pub fn loss_edge_select(tape: &mut Tape, pair_logits: Var, deltas: &[f64]) -> Var {
    if deltas.is_empty() {
        return tape.constant(Matrix::scalar(0.0));
    }
    let targets = Matrix::col_vector(deltas);
    tape.bce_with_logits_sum(pair_logits, targets)
}

/// Edit loss: BCE on keep logits of the initial graph's nodes and edges.
pub fn loss_edit(
    tape: &mut Tape,
    node_keep_logits: Var,
    node_deltas: &[f64],
    edge_keep_logits: Var,
    edge_deltas: &[f64],
) -> Var {
    let node_term = tape.bce_with_logits_sum(node_keep_logits, Matrix::col_vector(node_deltas));
    if edge_deltas.is_empty() {
        return node_term;
    }
    let edge_term = tape.bce_with_logits_sum(edge_keep_logits, Matrix::col_vector(edge_deltas));
    tape.add(node_term, edge_term)
}

/// Classification loss: CE over node rows plus CE over edge rows. Callers
/// pass the class-logit blocks restricted to whichever domain is active
/// (all selected elements by default, or the post-edit structure in
/// strict mode).
pub fn loss_classify(
    tape: &mut Tape,
    node_cls_logits: Option<Var>,
    node_labels: &[usize],
    edge_cls_logits: Option<Var>,
    edge_labels: &[usize],
) -> Var {
    let mut total = tape.constant(Matrix::scalar(0.0));
    if let Some(logits) = node_cls_logits {
        if !node_labels.is_empty() {
            let t = tape.ce_with_logits_sum(logits, node_labels);
            total = tape.add(total, t);
        }
    }
    if let Some(logits) = edge_cls_logits {
        if !edge_labels.is_empty() {
            let t = tape.ce_with_logits_sum(logits, edge_labels);
            total = tape.add(total, t);
        }
    }
    total
}
