//! End-to-end behavior of the composed model: shapes, determinism, decode
//! post-conditions, gold recall of the initial graph, and a short training
//! smoke run.

use textgraph_core::config::{EncoderConfig, GtConfig, ModelConfig, TrainConfig};
use textgraph_core::data::{enumerate_spans, GoldAssignment, LabelSchema, Sentence};
use textgraph_core::model::{ForwardOptions, Mode, Model};
use textgraph_core::optim::{AdamW, BatchPlan};
use textgraph_core::rng::SeededRng;
use textgraph_core::synth::{generate, SynthSpec};

fn toy_config(d: usize, heads: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            hidden_size: d,
            toy_vocab_size: 4096,
            max_positions: 64,
            ..EncoderConfig::default()
        },
        gt: GtConfig { layers: 2, heads, ..GtConfig::default() },
        ..ModelConfig::default()
    }
}

fn synth_corpus(n: usize, seed: u64) -> (Vec<Sentence>, LabelSchema) {
    let spec = SynthSpec { sentences: n, seed, ..SynthSpec::default() };
    let corpus = generate(&spec).unwrap();
    let schema = LabelSchema::from_sentences(&corpus).unwrap();
    (corpus, schema)
}

fn golds(corpus: &[Sentence], schema: &LabelSchema, width: usize) -> Vec<GoldAssignment> {
    corpus
        .iter()
        .map(|s| {
            let spans = enumerate_spans(s.tokens.len(), width);
            GoldAssignment::build(s, &spans, schema).unwrap()
        })
        .collect()
}

#[test]
fn forward_respects_top_k_defaults() {
    let (corpus, schema) = synth_corpus(4, 7);
    let model = Model::new(toy_config(32, 4), schema, 5).unwrap();
    let sentence = &corpus[0];
    let len = sentence.tokens.len();
    let mut rng = SeededRng::new(1);
    let pass = model.forward(sentence, &ForwardOptions::default(), &mut rng).unwrap();
    // K defaults to the sequence length for both nodes and edges.
    assert_eq!(pass.plan.node_sel.len(), len);
    assert_eq!(pass.plan.edge_sel.len(), len.min(pass.pairs.len()));
    assert!(pass.graph.check());
    // Deterministic identifier assignment at evaluation.
    assert_eq!(pass.plan.assignment, (0..len).collect::<Vec<_>>());
    let spans = enumerate_spans(len, model.config().max_span_width);
    assert_eq!(pass.tape.value(pass.node_logits).rows(), spans.len());
}

#[test]
fn degenerate_single_token_sentence_has_one_node_no_edges() {
    let schema = LabelSchema::from_sentences(&[]).unwrap();
    let model = Model::new(toy_config(16, 2), schema, 3).unwrap();
    let sentence = Sentence::new(vec!["word".into()], vec![], vec![], None).unwrap();
    let mut rng = SeededRng::new(0);
    let pass = model.forward(&sentence, &ForwardOptions::default(), &mut rng).unwrap();
    assert_eq!(pass.graph.num_nodes(), 1);
    assert_eq!(pass.graph.num_edges(), 0);
    let pred = model.predict(&sentence).unwrap();
    assert!(pred.ie.relations.is_empty());
}

#[test]
fn prediction_is_deterministic() {
    let (corpus, schema) = synth_corpus(3, 11);
    let model = Model::new(toy_config(32, 4), schema, 9).unwrap();
    for s in &corpus {
        let a = model.predict(s).unwrap();
        let b = model.predict(s).unwrap();
        assert_eq!(a.ie, b.ie);
        assert_eq!(a.structure, b.structure);
        assert_eq!(a.node_keep, b.node_keep);
    }
}

#[test]
fn shifting_classifier_logits_by_constant_keeps_labels() {
    let (corpus, schema) = synth_corpus(3, 13);
    let mut model = Model::new(toy_config(32, 4), schema, 21).unwrap();
    let before: Vec<_> = corpus.iter().map(|s| model.predict(s).unwrap().ie).collect();
    // Shift every node-class logit by the same constant via the bias row.
    for v in model.store_mut().get_mut("cls.node.l2.b").value.data_mut() {
        *v += 3.25;
    }
    for v in model.store_mut().get_mut("cls.edge.l2.b").value.data_mut() {
        *v += -1.5;
    }
    let after: Vec<_> = corpus.iter().map(|s| model.predict(s).unwrap().ie).collect();
    assert_eq!(before, after);
}

#[test]
fn initial_graph_gold_recall_matches_membership_oracle() {
    let (corpus, schema) = synth_corpus(16, 17);
    let model = Model::new(toy_config(32, 4), schema, 31).unwrap();
    let mut rng = SeededRng::new(2);
    let mut in_graph = 0usize;
    let mut oracle_in_graph = 0usize;
    let mut total = 0usize;
    for s in &corpus {
        let pass = model.forward(s, &ForwardOptions::default(), &mut rng).unwrap();
        let node_spans = pass.node_spans();
        for e in &s.entities {
            total += 1;
            // Library-side membership.
            if node_spans.contains(&e.span) {
                in_graph += 1;
            }
            // Brute-force: scan the selected index list against the
            // enumerated candidates.
            let spans = enumerate_spans(s.tokens.len(), model.config().max_span_width);
            let mut found = false;
            for &sel in &pass.plan.node_sel {
                if spans[sel].start == e.span.start && spans[sel].end == e.span.end {
                    found = true;
                }
            }
            if found {
                oracle_in_graph += 1;
            }
        }
    }
    assert_eq!(in_graph, oracle_in_graph);
    assert!(total > 0);
}

#[test]
fn pool_smaller_than_node_count_errors() {
    let (corpus, schema) = synth_corpus(1, 19);
    let mut config = toy_config(32, 4);
    config.gt.pool_size = 2; // sentences are at least 8 tokens, K = L > 2
    let model = Model::new(config, schema, 3).unwrap();
    let err = model.predict(&corpus[0]).unwrap_err();
    assert!(matches!(err, textgraph_core::Error::PoolTooSmall { .. }));
}

#[test]
fn force_gold_injects_missed_gold_nodes() {
    let (corpus, schema) = synth_corpus(4, 23);
    let mut config = toy_config(32, 4);
    config.graph.k_nodes = 1; // starve selection so gold spans are missed
    config.graph.force_gold = true;
    let model = Model::new(config, schema.clone(), 3).unwrap();
    let s = &corpus[0];
    let spans = enumerate_spans(s.tokens.len(), model.config().max_span_width);
    let gold = GoldAssignment::build(s, &spans, &schema).unwrap();
    let mut rng = SeededRng::new(4);
    let opts = ForwardOptions {
        mode: Mode::Train { dropout: 0.0 },
        force_gold: Some(&gold),
        ..ForwardOptions::default()
    };
    let pass = model.forward(s, &opts, &mut rng).unwrap();
    let node_spans = pass.node_spans();
    for e in &s.entities {
        assert!(node_spans.contains(&e.span), "gold span missing despite force_gold");
    }
}

#[test]
fn ten_step_training_is_seed_deterministic() {
    let (corpus, schema) = synth_corpus(8, 29);
    let width = 12;
    let train_cfg = TrainConfig {
        lr_backbone: 1e-3,
        lr_others: 1e-3,
        warmup_steps: 2,
        total_steps: 10,
        batch_size: 4,
        seed: 77,
        ..TrainConfig::default()
    };
    let run = || {
        let mut model = Model::new(toy_config(32, 4), schema.clone(), 55).unwrap();
        let gold = golds(&corpus, &schema, width);
        let mut opt = AdamW::new(train_cfg.clone());
        let mut plan = BatchPlan::new(corpus.len(), train_cfg.seed);
        let mut losses = Vec::new();
        for step in 0..10 {
            let idx = plan.next_batch(train_cfg.batch_size);
            let batch: Vec<_> = idx.iter().map(|&i| (&corpus[i], &gold[i])).collect();
            model.store_mut().zero_grads();
            let bd = model
                .accumulate_batch(&batch, train_cfg.seed.wrapping_add(step), train_cfg.fnn_dropout)
                .unwrap();
            AdamW::clip_gradients(model.store_mut(), train_cfg.grad_clip);
            opt.step(model.store_mut());
            losses.push(bd.total);
        }
        losses
    };
    let a = run();
    let b = run();
    assert_eq!(a, b, "loss trajectories must be bit-identical under a fixed seed");
}

#[test]
fn short_training_run_decreases_loss() {
    let (corpus, schema) = synth_corpus(8, 31);
    let width = 12;
    let gold = golds(&corpus, &schema, width);
    let train_cfg = TrainConfig {
        lr_backbone: 2e-3,
        lr_others: 2e-3,
        weight_decay: 1e-4,
        warmup_steps: 5,
        total_steps: 80,
        batch_size: 4,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut model = Model::new(toy_config(32, 4), schema, 71).unwrap();
    let mut opt = AdamW::new(train_cfg.clone());
    let mut plan = BatchPlan::new(corpus.len(), train_cfg.seed);
    let mut first = None;
    let mut last = 0.0;
    for step in 0..80u64 {
        let idx = plan.next_batch(train_cfg.batch_size);
        let batch: Vec<_> = idx.iter().map(|&i| (&corpus[i], &gold[i])).collect();
        model.store_mut().zero_grads();
        let bd = model
            .accumulate_batch(&batch, 1000 + step, train_cfg.fnn_dropout)
            .unwrap();
        assert!(bd.is_finite(), "loss must stay finite");
        assert!(
            (bd.total - (bd.node_select + bd.edge_select + bd.edit + bd.classify)).abs() < 1e-9,
            "total must equal the sum of components"
        );
        AdamW::clip_gradients(model.store_mut(), train_cfg.grad_clip);
        opt.step(model.store_mut());
        if first.is_none() {
            first = Some(bd.total);
        }
        last = bd.total;
    }
    let first = first.unwrap();
    assert!(
        last < first / 3.0,
        "expected at least 3x loss reduction, got {first:.3} -> {last:.3}"
    );
}
