//! The training loop: deterministic batching, AdamW with warmup/decay,
//! JSON-lines loss logging, periodic dev evaluation, and best-checkpoint
//! retention by strict relation F1.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use textgraph_core::data::{enumerate_spans, GoldAssignment, LabelSchema, Sentence};
use textgraph_core::metrics::{micro_report, MetricReport};
use textgraph_core::model::Model;
use textgraph_core::optim::{AdamW, BatchPlan};
use textgraph_core::rng::fnv1a;

use crate::runconfig::{RunConfig, FORMAT_VERSION};
use crate::{checkpoint, corpus, Error, Result};

#[derive(Debug, Serialize)]
struct LogLine {
    step: usize,
    lr_backbone: f64,
    lr_others: f64,
    node_select: f64,
    edge_select: f64,
    edit: f64,
    classify: f64,
    total: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    pub final_step: usize,
    pub best_step: Option<usize>,
    pub best_dev: Option<MetricReport>,
    pub best_path: Option<PathBuf>,
    pub last_path: PathBuf,
    pub log_path: PathBuf,
}

pub fn gold_assignments(
    corpus: &[Sentence],
    schema: &LabelSchema,
    max_span_width: usize,
) -> Result<Vec<GoldAssignment>> {
    corpus
        .iter()
        .map(|s| {
            let spans = enumerate_spans(s.tokens.len(), max_span_width);
            GoldAssignment::build(s, &spans, schema).map_err(Error::Core)
        })
        .collect()
}

/// Predict every sentence and score micro-averaged ENT/REL/REL+.
pub fn evaluate(model: &Model, corpus: &[Sentence]) -> Result<MetricReport> {
    let mut preds = Vec::with_capacity(corpus.len());
    for s in corpus {
        preds.push(model.predict(s).map_err(Error::Core)?.ie);
    }
    Ok(micro_report(preds.iter().zip(corpus.iter()).map(|(p, g)| (p, g))))
}

/// Count of gold entities the candidate span set cannot reach (wider than
/// the span cap). Reported once at startup.
fn unreachable_total(golds: &[GoldAssignment]) -> (usize, usize) {
    golds.iter().fold((0, 0), |(e, r), g| {
        (e + g.unreachable_entities, r + g.unreachable_relations)
    })
}

pub fn train(
    run: &RunConfig,
    train_corpus: &[Sentence],
    dev_corpus: Option<&[Sentence]>,
    out_dir: &Path,
    mut progress: impl FnMut(&str),
) -> Result<TrainOutcome> {
    run.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    if train_corpus.is_empty() {
        return Err(Error::Other("training corpus is empty".into()));
    }

    // Vocabularies come from the training split only.
    let schema = LabelSchema::from_sentences(train_corpus).map_err(Error::Core)?;
    if let Some(dev) = dev_corpus {
        corpus::validate_labels(dev, &schema)?;
    }
    let golds = gold_assignments(train_corpus, &schema, run.model.max_span_width)?;
    let (unreachable_entities, unreachable_relations) = unreachable_total(&golds);
    if unreachable_entities > 0 {
        progress(&format!(
            "note: {unreachable_entities} gold entities (and {unreachable_relations} relations) exceed data.max_span_width = {} and are unreachable",
            run.model.max_span_width
        ));
    }

    // Echo the resolved configuration next to every other artifact.
    let config_path = out_dir.join("config.json");
    let config_doc = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "config_hash": run.config_hash(),
        "config": run,
    });
    std::fs::write(&config_path, format!("{:#}\n", config_doc))
        .map_err(|e| Error::io(&config_path, e))?;

    let mut model =
        Model::new(run.model.clone(), schema, run.train.seed).map_err(Error::Core)?;
    let mut opt = AdamW::new(run.train.clone());
    let mut plan = BatchPlan::new(train_corpus.len(), run.train.seed);

    let log_path = out_dir.join("train_log.jsonl");
    let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let last_path = out_dir.join("last.ckpt");
    let best_path = out_dir.join("best.ckpt");

    let mut best: Option<(usize, MetricReport)> = None;
    let total = run.train.total_steps;
    for step in 1..=total {
        let idx = plan.next_batch(run.train.batch_size);
        let batch: Vec<_> = idx.iter().map(|&i| (&train_corpus[i], &golds[i])).collect();
        let (lr_backbone, lr_others) = opt.next_lrs();
        model.store_mut().zero_grads();
        let step_seed = fnv1a(format!("{}:{step}", run.train.seed).as_bytes());
        let bd = model
            .accumulate_batch(&batch, step_seed, run.train.fnn_dropout)
            .map_err(Error::Core)?;
        if !bd.is_finite() {
            let diag_path = out_dir.join("diagnostic.json");
            let diag = serde_json::json!({
                "format_version": FORMAT_VERSION,
                "config": run,
                "step": step,
                "loss": {
                    "node_select": bd.node_select,
                    "edge_select": bd.edge_select,
                    "edit": bd.edit,
                    "classify": bd.classify,
                    "total": bd.total,
                },
                "grad_norm": model.store().grad_norm(),
            });
            let _ = std::fs::write(&diag_path, format!("{:#}\n", diag));
            return Err(Error::Other(format!(
                "non-finite loss at step {step}; diagnostics written to {}",
                diag_path.display()
            )));
        }
        AdamW::clip_gradients(model.store_mut(), run.train.grad_clip);
        opt.step(model.store_mut());

        let line = LogLine {
            step,
            lr_backbone,
            lr_others,
            node_select: bd.node_select,
            edge_select: bd.edge_select,
            edit: bd.edit,
            classify: bd.classify,
            total: bd.total,
        };
        writeln!(log, "{}", serde_json::to_string(&line).expect("log line serializes"))
            .map_err(|e| Error::io(&log_path, e))?;

        let at_eval_point = run.train.eval_every > 0 && step % run.train.eval_every == 0;
        if (at_eval_point || step == total) && dev_corpus.is_some() {
            let dev = dev_corpus.unwrap();
            let report = evaluate(&model, dev)?;
            progress(&format!(
                "step {step}/{total} loss {:.4} dev ENT {:.4} REL {:.4} REL+ {:.4}",
                bd.total, report.ent.f1, report.rel.f1, report.rel_plus.f1
            ));
            let improved = match &best {
                None => true,
                Some((_, prev)) => report.rel_plus.f1 > prev.rel_plus.f1,
            };
            if improved {
                best = Some((step, report));
                checkpoint::save(&best_path, &model, run, step, Some(&report))?;
            }
        } else if step % 100 == 0 || step == total {
            progress(&format!("step {step}/{total} loss {:.4}", bd.total));
        }
    }

    let final_dev = best.as_ref().map(|(_, r)| *r);
    checkpoint::save(&last_path, &model, run, total, final_dev.as_ref())?;
    Ok(TrainOutcome {
        model,
        final_step: total,
        best_step: best.as_ref().map(|(s, _)| *s),
        best_dev: final_dev,
        best_path: best.map(|_| best_path),
        last_path,
        log_path,
    })
}
