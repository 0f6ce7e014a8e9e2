//! Finite-difference gradient checking.
//!
//! The checker re-runs a deterministic forward build twice per parameter
//! element (central differences) and compares against the tape's analytic
//! gradients. Relative error uses max(1, |analytic|, |numeric|) as the
//! denominator so near-zero gradients are compared absolutely.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autograd::{Tape, Var};
use crate::data::{GoldAssignment, Sentence};
use crate::model::{ForwardOptions, ForwardPlan, Mode, Model};
use crate::num;
use crate::params::{Binder, ParamStore};
use crate::rng::SeededRng;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Scalar parameter entries compared.
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter element where the worst error occurred.
    pub worst: String,
}

impl GradCheckReport {
    fn update(&mut self, name: &str, index: usize, rel: f64) {
        self.checked += 1;
        if rel > self.max_rel_err {
            self.max_rel_err = rel;
            self.worst = format!("{name}[{index}]");
        }
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = num::abs(analytic).max(num::abs(numeric)).max(1.0);
    num::abs(analytic - numeric) / denom
}

/// Check every parameter in the store against central finite differences
/// of `build`, which must deterministically construct a scalar loss.
pub fn check_params(
    store: &mut ParamStore,
    build: &dyn Fn(&ParamStore, &mut Tape, &mut Binder) -> Var,
    eps: f64,
) -> GradCheckReport {
    let mut tape = Tape::new();
    let mut binder = Binder::new();
    let loss = build(store, &mut tape, &mut binder);
    assert_eq!(tape.value(loss).shape(), (1, 1), "gradient check needs a scalar loss");
    let grads = tape.backward(loss);
    store.zero_grads();
    binder.accumulate(store, &grads, 1.0);

    let eval = |store: &ParamStore| -> f64 {
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let v = build(store, &mut tape, &mut binder);
        tape.value(v).item()
    };

    let mut report = GradCheckReport { checked: 0, max_rel_err: 0.0, worst: String::new() };
    for name in store.names() {
        let len = store.get(&name).value.len();
        for i in 0..len {
            let orig = store.get(&name).value.data()[i];
            store.get_mut(&name).value.data_mut()[i] = orig + eps;
            let plus = eval(store);
            store.get_mut(&name).value.data_mut()[i] = orig - eps;
            let minus = eval(store);
            store.get_mut(&name).value.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = store.get(&name).grad.data()[i];
            report.update(&name, i, rel_err(analytic, numeric));
        }
    }
    report
}

/// Full-pipeline check: analytic gradients of the total loss for one
/// sentence against finite differences, with selections, identifier
/// assignment, and dropout frozen so the loss is smooth in the parameters.
pub fn check_model(
    model: &mut Model,
    sentence: &Sentence,
    gold: &GoldAssignment,
    eps: f64,
) -> GradCheckReport {
    let plan = freeze_plan(model, sentence);
    let loss_of = |model: &Model| -> f64 {
        let mut pass = frozen_pass(model, sentence, &plan);
        let (loss, _) = model.sentence_loss(&mut pass, gold);
        pass.tape.value(loss).item()
    };

    let mut pass = frozen_pass(model, sentence, &plan);
    let (loss, _) = model.sentence_loss(&mut pass, gold);
    let grads = pass.tape.backward(loss);
    model.store_mut().zero_grads();
    pass.binder.accumulate(model.store_mut(), &grads, 1.0);
    let analytic: Vec<(String, Vec<f64>)> = model
        .store()
        .iter()
        .map(|(name, p)| (name.clone(), p.grad.data().to_vec()))
        .collect();

    let mut report = GradCheckReport { checked: 0, max_rel_err: 0.0, worst: String::new() };
    for (name, grad) in analytic {
        for (i, &a) in grad.iter().enumerate() {
            let orig = model.store().get(&name).value.data()[i];
            model.store_mut().get_mut(&name).value.data_mut()[i] = orig + eps;
            let plus = loss_of(model);
            model.store_mut().get_mut(&name).value.data_mut()[i] = orig - eps;
            let minus = loss_of(model);
            model.store_mut().get_mut(&name).value.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            report.update(&name, i, rel_err(a, numeric));
        }
    }
    report
}

/// Record the selections one training-mode forward pass makes.
pub fn freeze_plan(model: &Model, sentence: &Sentence) -> ForwardPlan {
    let mut rng = SeededRng::new(17);
    let opts =
        ForwardOptions { mode: Mode::Train { dropout: 0.0 }, ..ForwardOptions::default() };
    let pass = model.forward(sentence, &opts, &mut rng).expect("forward failed");
    pass.plan
}

fn frozen_pass(
    model: &Model,
    sentence: &Sentence,
    plan: &ForwardPlan,
) -> crate::model::SentencePass {
    let mut rng = SeededRng::new(17);
    let opts = ForwardOptions {
        mode: Mode::Train { dropout: 0.0 },
        frozen: Some(plan),
        force_gold: None,
        capture_attention: false,
    };
    model.forward(sentence, &opts, &mut rng).expect("forward failed")
}
