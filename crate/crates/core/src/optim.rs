//! AdamW with two learning-rate groups (backbone vs. everything else),
//! linear warmup followed by linear decay, and global-norm gradient
//! clipping.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::TrainConfig;
use crate::matrix::Matrix;
use crate::num;
use crate::params::{ParamGroup, ParamStore};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Warmup/decay multiplier in [0, 1] for a 1-based step.
pub fn schedule(step: usize, warmup: usize, total: usize) -> f64 {
    if warmup > 0 && step <= warmup {
        return step as f64 / warmup as f64;
    }
    if total <= warmup {
        return 1.0;
    }
    let remaining = total.saturating_sub(step) as f64;
    (remaining / (total - warmup) as f64).max(0.0)
}

struct Moments {
    m: Matrix,
    v: Matrix,
}

pub struct AdamW {
    cfg: TrainConfig,
    state: BTreeMap<String, Moments>,
    step: usize,
}

impl AdamW {
    pub fn new(cfg: TrainConfig) -> Self {
        Self { cfg, state: BTreeMap::new(), step: 0 }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Learning rates (backbone, others) that the next `step` call will use.
    pub fn next_lrs(&self) -> (f64, f64) {
        let mult = schedule(self.step + 1, self.cfg.warmup_steps, self.cfg.total_steps);
        (self.cfg.lr_backbone * mult, self.cfg.lr_others * mult)
    }

    /// Scale all gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_gradients(store: &mut ParamStore, max_norm: f64) -> f64 {
        let norm = store.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for (_, p) in store.iter_mut() {
                for g in p.grad.data_mut() {
                    *g *= k;
                }
            }
        }
        norm
    }

    /// One AdamW update over all non-frozen parameters. Gradients are
    /// consumed as-is; callers clip and zero them around this.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let t = self.step;
        let mult = schedule(t, self.cfg.warmup_steps, self.cfg.total_steps);
        let bias1 = 1.0 - num::powi(BETA1, t as i32);
        let bias2 = 1.0 - num::powi(BETA2, t as i32);
        for (name, p) in store.iter_mut() {
            if p.frozen {
                continue;
            }
            let lr_base = match p.group {
                ParamGroup::Backbone => self.cfg.lr_backbone,
                ParamGroup::Others => self.cfg.lr_others,
            };
            let lr = lr_base * mult;
            let st = self.state.entry(name.clone()).or_insert_with(|| Moments {
                m: Matrix::zeros(p.value.rows(), p.value.cols()),
                v: Matrix::zeros(p.value.rows(), p.value.cols()),
            });
            let wd = self.cfg.weight_decay;
            let (values, grads) = (p.value.data_mut(), p.grad.data());
            let (ms, vs) = (st.m.data_mut(), st.v.data_mut());
            for i in 0..values.len() {
                let g = grads[i];
                ms[i] = BETA1 * ms[i] + (1.0 - BETA1) * g;
                vs[i] = BETA2 * vs[i] + (1.0 - BETA2) * g * g;
                let m_hat = ms[i] / bias1;
                let v_hat = vs[i] / bias2;
                // Decoupled weight decay.
                values[i] -= lr * (m_hat / (num::sqrt(v_hat) + EPS) + wd * values[i]);
            }
        }
    }
}

/// Deterministic batching: per-epoch shuffles drawn from one seeded stream.
pub struct BatchPlan {
    order: Vec<usize>,
    cursor: usize,
    rng: crate::rng::SeededRng,
}

impl BatchPlan {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut plan = Self {
            order: (0..n).collect(),
            cursor: 0,
            rng: crate::rng::SeededRng::derive(seed, "batch-order"),
        };
        plan.reshuffle();
        plan
    }

    fn reshuffle(&mut self) {
        self.rng.shuffle(&mut self.order);
        self.cursor = 0;
    }

    /// Next batch of up to `size` sentence indices, reshuffling between
    /// epochs.
    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        if self.order.is_empty() {
            return Vec::new();
        }
        if self.cursor >= self.order.len() {
            self.reshuffle();
        }
        let end = (self.cursor + size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamGroup;

    #[test]
    fn schedule_warms_up_then_decays_linearly() {
        assert!((schedule(1, 10, 110) - 0.1).abs() < 1e-15);
        assert!((schedule(10, 10, 110) - 1.0).abs() < 1e-15);
        assert!((schedule(60, 10, 110) - 0.5).abs() < 1e-15);
        assert!((schedule(110, 10, 110) - 0.0).abs() < 1e-15);
        assert_eq!(schedule(5, 0, 0), 1.0);
    }

    #[test]
    fn adamw_moves_against_gradient_and_decays_weights() {
        let cfg = TrainConfig {
            lr_backbone: 0.1,
            lr_others: 0.1,
            weight_decay: 0.0,
            warmup_steps: 0,
            total_steps: 1_000_000,
            ..TrainConfig::default()
        };
        let mut store = ParamStore::new();
        store.insert("w", Matrix::scalar(1.0), ParamGroup::Others);
        store.get_mut("w").grad = Matrix::scalar(2.0);
        let mut opt = AdamW::new(cfg);
        opt.step(&mut store);
        let v = store.get("w").value.item();
        assert!(v < 1.0, "moved against positive gradient, got {v}");
    }

    #[test]
    fn frozen_parameters_stay_put() {
        let mut store = ParamStore::new();
        store.insert("p", Matrix::scalar(3.0), ParamGroup::Others);
        store.freeze("p");
        store.get_mut("p").grad = Matrix::scalar(5.0);
        let mut opt = AdamW::new(TrainConfig { warmup_steps: 0, total_steps: 10, ..TrainConfig::default() });
        opt.step(&mut store);
        assert_eq!(store.get("p").value.item(), 3.0);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut store = ParamStore::new();
        store.insert("a", Matrix::scalar(0.0), ParamGroup::Others);
        store.insert("b", Matrix::scalar(0.0), ParamGroup::Others);
        store.get_mut("a").grad = Matrix::scalar(3.0);
        store.get_mut("b").grad = Matrix::scalar(4.0);
        let before = AdamW::clip_gradients(&mut store, 1.0);
        assert!((before - 5.0).abs() < 1e-12);
        assert!((store.grad_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_plan_covers_all_and_reshuffles_deterministically() {
        let mut a = BatchPlan::new(7, 3);
        let mut b = BatchPlan::new(7, 3);
        let mut seen = alloc::vec::Vec::new();
        for _ in 0..4 {
            let batch = a.next_batch(2);
            assert_eq!(batch, b.next_batch(2));
            seen.extend(batch);
        }
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 7);
    }
}
