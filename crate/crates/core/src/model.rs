//! The full pipeline: encode, build the initial graph, refine it with the
//! configured backend, edit, and classify. One forward pass builds one tape
//! per sentence; training accumulates gradients across a batch serially.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autograd::{Tape, Var};
use crate::config::{Backend, ModelConfig};
use crate::data::{GoldAssignment, LabelSchema, Sentence, Span};
use crate::edit::{self, FinalStructure};
use crate::encoder::{self, ContextualProvider};
use crate::error::{Error, Result};
use crate::graph::{self, InitialGraph};
use crate::loss::{self, LossBreakdown};
use crate::matrix::Matrix;
use crate::mpgnn::{self, MessagePassingConfig};
use crate::nn::{self, Dropout};
use crate::params::{Binder, Initializer, ParamGroup, ParamStore};
use crate::rng::SeededRng;
use crate::transformer::{self, AssignMode, LayerAttention};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Train { dropout: f64 },
    Eval,
}

/// Frozen non-differentiable choices of one forward pass. Reusing a plan
/// replays the exact same selections and identifier assignment, which is
/// what finite-difference gradient checks need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardPlan {
    /// Indices into the candidate span list, in selection (rank) order.
    pub node_sel: Vec<usize>,
    /// Indices into the ordered-pair list over selected nodes.
    pub edge_sel: Vec<usize>,
    /// Identifier pool row per selected node.
    pub assignment: Vec<usize>,
}

pub struct ForwardOptions<'a> {
    pub mode: Mode,
    pub frozen: Option<&'a ForwardPlan>,
    /// Union gold elements into the selections (training aid, off by
    /// default; see `graph.force_gold`).
    pub force_gold: Option<&'a GoldAssignment>,
    pub capture_attention: bool,
}

impl Default for ForwardOptions<'_> {
    fn default() -> Self {
        Self { mode: Mode::Eval, frozen: None, force_gold: None, capture_attention: false }
    }
}

/// Everything one forward pass produced, owning its tape.
pub struct SentencePass {
    pub tape: Tape,
    pub binder: Binder,
    pub spans: Vec<Span>,
    pub plan: ForwardPlan,
    /// Ordered pairs (local node indices) the edge scores range over.
    pub pairs: Vec<(usize, usize)>,
    pub graph: InitialGraph,
    /// Selection logits for every candidate span.
    pub node_logits: Var,
    /// Selection logits for every ordered pair of selected nodes.
    pub pair_logits: Var,
    pub keep_node_logits: Var,
    pub keep_edge_logits: Var,
    pub node_cls_logits: Var,
    pub edge_cls_logits: Var,
    pub attention: Option<Vec<LayerAttention>>,
}

impl SentencePass {
    pub fn node_keep_probs(&self) -> Vec<f64> {
        self.tape.value(self.keep_node_logits).data().iter().map(|&x| crate::num::sigmoid(x)).collect()
    }

    pub fn edge_keep_probs(&self) -> Vec<f64> {
        self.tape.value(self.keep_edge_logits).data().iter().map(|&x| crate::num::sigmoid(x)).collect()
    }

    /// Spans of the selected nodes, in rank order.
    pub fn node_spans(&self) -> Vec<Span> {
        self.plan.node_sel.iter().map(|&i| self.spans[i]).collect()
    }
}

/// Final typed prediction: entities plus directed relations whose head and
/// tail index into the entity list.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IeGraph {
    pub entities: Vec<PredictedEntity>,
    pub relations: Vec<PredictedRelation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictedEntity {
    pub span: Span,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictedRelation {
    pub head: usize,
    pub tail: usize,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub ie: IeGraph,
    pub initial: InitialGraph,
    pub structure: FinalStructure,
    pub node_keep: Vec<f64>,
    pub edge_keep: Vec<f64>,
}

pub struct Model {
    config: ModelConfig,
    schema: LabelSchema,
    store: ParamStore,
    provider: Option<Box<dyn ContextualProvider>>,
}

impl Model {
    pub fn new(config: ModelConfig, schema: LabelSchema, seed: u64) -> Result<Self> {
        config.validate()?;
        let init = Initializer::new(seed);
        let mut store = ParamStore::new();
        let d = config.encoder.hidden_size;
        encoder::register_params(&mut store, &init, &config.encoder);
        encoder::register_span_ffn(&mut store, &init, d);
        graph::register_params(&mut store, &init, d);
        match config.gt.backend {
            Backend::Transformer => {
                transformer::register_params(&mut store, &init, &config.gt, d, config.pool_size());
            }
            _ => {
                let mp = MessagePassingConfig {
                    variant: config.gt.backend,
                    layers: config.gt.layers,
                    undirected_messages: false,
                };
                mpgnn::register_params(&mut store, &init, &mp, d);
            }
        }
        edit::register_params(&mut store, &init, d);
        nn::register_ffn(&mut store, &init, "cls.node", d, d, schema.num_entity_types(), ParamGroup::Others);
        nn::register_ffn(&mut store, &init, "cls.edge", d, d, schema.num_relation_types(), ParamGroup::Others);
        Ok(Self { config, schema, store, provider: None })
    }

    /// Rebuild from deserialized parts (checkpoint loading).
    pub fn from_parts(config: ModelConfig, schema: LabelSchema, store: ParamStore) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, schema, store, provider: None })
    }

    pub fn set_provider(&mut self, provider: Box<dyn ContextualProvider>) {
        self.provider = Some(provider);
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn forward(
        &self,
        sentence: &Sentence,
        opts: &ForwardOptions<'_>,
        rng: &mut SeededRng,
    ) -> Result<SentencePass> {
        sentence.check_length(self.config.encoder.max_positions)?;
        let len = sentence.tokens.len();
        let spans = crate::data::enumerate_spans(len, self.config.max_span_width);
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let mut drop = match opts.mode {
            Mode::Train { dropout } => Dropout::new(dropout, rng.clone_stream("dropout")),
            Mode::Eval => Dropout::off(),
        };

        let h = encoder::embed_tokens(
            &mut tape,
            &mut binder,
            &self.store,
            &self.config.encoder,
            &sentence.tokens,
            self.provider.as_deref(),
        )?;
        let s = encoder::span_repr(&mut tape, &mut binder, &self.store, h, &spans, &mut drop)?;

        // Node selection.
        let node_logits = graph::node_logits(&mut tape, &mut binder, &self.store, s);
        let node_logit_values: Vec<f64> = tape.value(node_logits).data().to_vec();
        let node_sel = match opts.frozen {
            Some(plan) => plan.node_sel.clone(),
            None => {
                let mut sel = graph::select_top_k(&node_logit_values, self.config.k_nodes(len));
                if let Some(gold) = opts.force_gold {
                    force_gold_nodes(&mut sel, gold);
                }
                sel
            }
        };
        let node_reprs = tape.gather_rows(s, &node_sel);

        // Edge selection over ordered pairs of the selected nodes.
        let pairs = graph::ordered_pairs(node_sel.len());
        let pair_logits = if pairs.is_empty() {
            tape.constant(Matrix::zeros(0, 1))
        } else {
            graph::edge_logits(&mut tape, &mut binder, &self.store, node_reprs, &pairs)
        };
        let pair_logit_values: Vec<f64> = tape.value(pair_logits).data().to_vec();
        let edge_sel = match opts.frozen {
            Some(plan) => plan.edge_sel.clone(),
            None => {
                let mut sel = graph::select_top_k(&pair_logit_values, self.config.k_edges(len));
                if let Some(gold) = opts.force_gold {
                    force_gold_edges(&mut sel, &pairs, &node_sel, &spans, gold);
                }
                sel
            }
        };
        let initial =
            graph::assemble(&spans, &node_sel, &node_logit_values, &pairs, &edge_sel, &pair_logit_values);

        // Identifier assignment (only meaningful for the transformer, but
        // recorded in the plan regardless so plans stay replayable).
        let assignment = match opts.frozen {
            Some(plan) => plan.assignment.clone(),
            None => {
                let mode = match opts.mode {
                    Mode::Train { .. } => AssignMode::Random,
                    Mode::Eval => AssignMode::Deterministic,
                };
                let mut id_rng = rng.clone_stream("identifiers");
                transformer::assign_identifiers(
                    node_sel.len(),
                    self.config.pool_size(),
                    mode,
                    &mut id_rng,
                )?
            }
        };

        // Refine.
        let (node_states, edge_states, attention) = match self.config.gt.backend {
            Backend::Transformer => {
                let tok = transformer::tokenize_graph(
                    &mut tape,
                    &mut binder,
                    &self.store,
                    &self.config.gt,
                    &initial,
                    node_reprs,
                    &assignment,
                )?;
                let (z_l, attn) = transformer::transformer_forward(
                    &mut tape,
                    &mut binder,
                    &self.store,
                    &self.config.gt,
                    tok.z0,
                    &mut drop,
                    opts.capture_attention,
                )?;
                let node_states = tape.slice_rows(z_l, 0, tok.num_nodes);
                let edge_states = tape.slice_rows(z_l, tok.num_nodes, tok.num_edges);
                (node_states, edge_states, attn)
            }
            backend => {
                if opts.capture_attention {
                    return Err(Error::Unsupported(format!(
                        "attention capture requires the transformer backend, not {}",
                        backend.name()
                    )));
                }
                let mp = MessagePassingConfig {
                    variant: backend,
                    layers: self.config.gt.layers,
                    undirected_messages: false,
                };
                let node_states =
                    mpgnn::mp_forward(&mut tape, &mut binder, &self.store, &mp, &initial, node_reprs);
                let edge_states =
                    mpgnn::derive_edge_states(&mut tape, &mut binder, &self.store, &initial, node_states);
                (node_states, edge_states, None)
            }
        };

        // Edit heads (shared weight) and classification heads.
        let keep_node_logits = edit::keep_logits(&mut tape, &mut binder, &self.store, node_states);
        let keep_edge_logits = edit::keep_logits(&mut tape, &mut binder, &self.store, edge_states);
        let node_cls_logits =
            nn::ffn(&mut tape, &mut binder, &self.store, "cls.node", node_states, &mut drop);
        let edge_cls_logits =
            nn::ffn(&mut tape, &mut binder, &self.store, "cls.edge", edge_states, &mut drop);

        Ok(SentencePass {
            tape,
            binder,
            spans,
            plan: ForwardPlan { node_sel, edge_sel, assignment },
            pairs,
            graph: initial,
            node_logits,
            pair_logits,
            keep_node_logits,
            keep_edge_logits,
            node_cls_logits,
            edge_cls_logits,
            attention,
        })
    }

    /// Build the four loss components on the pass's tape. Returns the total
    /// loss variable and the component values for logging.
    pub fn sentence_loss(
        &self,
        pass: &mut SentencePass,
        gold: &GoldAssignment,
    ) -> (Var, LossBreakdown) {
        let strict_structure =
            if self.config.loss.strict_paper { Some(self.decode_pass(pass)) } else { None };
        let tape = &mut pass.tape;

        let span_deltas: Vec<f64> =
            (0..pass.spans.len()).map(|i| gold.node_delta(i)).collect();
        let l_nodes = loss::loss_node_select(tape, pass.node_logits, &span_deltas);

        let pair_deltas: Vec<f64> = pass
            .pairs
            .iter()
            .map(|&(a, b)| {
                gold.edge_delta(
                    pass.spans[pass.plan.node_sel[a]],
                    pass.spans[pass.plan.node_sel[b]],
                )
            })
            .collect();
        let l_edges = loss::loss_edge_select(tape, pass.pair_logits, &pair_deltas);

        let sel_node_deltas: Vec<f64> =
            pass.plan.node_sel.iter().map(|&i| gold.node_delta(i)).collect();
        let sel_edge_deltas: Vec<f64> =
            pass.plan.edge_sel.iter().map(|&p| pair_deltas[p]).collect();
        let l_edit = loss::loss_edit(
            tape,
            pass.keep_node_logits,
            &sel_node_deltas,
            pass.keep_edge_logits,
            &sel_edge_deltas,
        );

        let node_labels: Vec<usize> =
            pass.plan.node_sel.iter().map(|&i| gold.node_labels[i]).collect();
        let edge_labels: Vec<usize> = pass
            .plan
            .edge_sel
            .iter()
            .map(|&p| {
                let (a, b) = pass.pairs[p];
                gold.edge_label(
                    pass.spans[pass.plan.node_sel[a]],
                    pass.spans[pass.plan.node_sel[b]],
                )
            })
            .collect();
        let l_cls = if let Some(structure) = strict_structure {
            // Restrict to the decoded structure V_f / E_f.
            let (node_logits, node_lbls) = if structure.nodes.is_empty() {
                (None, Vec::new())
            } else {
                let picked = tape.gather_rows(pass.node_cls_logits, &structure.nodes);
                let lbls = structure.nodes.iter().map(|&i| node_labels[i]).collect();
                (Some(picked), lbls)
            };
            let (edge_logits, edge_lbls) = if structure.edges.is_empty() {
                (None, Vec::new())
            } else {
                let picked = tape.gather_rows(pass.edge_cls_logits, &structure.edges);
                let lbls = structure.edges.iter().map(|&i| edge_labels[i]).collect();
                (Some(picked), lbls)
            };
            loss::loss_classify(tape, node_logits, &node_lbls, edge_logits, &edge_lbls)
        } else {
            let edge_logits =
                if edge_labels.is_empty() { None } else { Some(pass.edge_cls_logits) };
            loss::loss_classify(tape, Some(pass.node_cls_logits), &node_labels, edge_logits, &edge_labels)
        };

        let t1 = tape.add(l_nodes, l_edges);
        let t2 = tape.add(l_edit, l_cls);
        let total = tape.add(t1, t2);
        let breakdown = LossBreakdown {
            node_select: tape.value(l_nodes).item(),
            edge_select: tape.value(l_edges).item(),
            edit: tape.value(l_edit).item(),
            classify: tape.value(l_cls).item(),
            total: tape.value(total).item(),
        };
        (total, breakdown)
    }

    /// Threshold + greedy + consistency on the pass's keep probabilities.
    fn decode_pass(&self, pass: &SentencePass) -> FinalStructure {
        let node_spans = pass.node_spans();
        let edges: Vec<(usize, usize)> =
            pass.graph.edges.iter().map(|e| (e.source, e.target)).collect();
        edit::decode_structure(
            &node_spans,
            &pass.node_keep_probs(),
            &edges,
            &pass.edge_keep_probs(),
            self.config.decode.threshold,
            self.config.decode.flat,
        )
    }

    /// Forward + backward for one batch; gradients are added into the store
    /// scaled by 1/batch so the batch loss is a mean over sentences.
    pub fn accumulate_batch(
        &mut self,
        batch: &[(&Sentence, &GoldAssignment)],
        step_seed: u64,
        dropout: f64,
    ) -> Result<LossBreakdown> {
        let scale = 1.0 / batch.len().max(1) as f64;
        let force_gold = self.config.graph.force_gold;
        let mut totals = LossBreakdown::zero();
        for (k, (sentence, gold)) in batch.iter().enumerate() {
            let mut rng = SeededRng::derive(step_seed, &format!("sentence-{k}"));
            let opts = ForwardOptions {
                mode: Mode::Train { dropout },
                frozen: None,
                force_gold: if force_gold { Some(gold) } else { None },
                capture_attention: false,
            };
            let mut pass = self.forward(sentence, &opts, &mut rng)?;
            let (loss_var, mut bd) = self.sentence_loss(&mut pass, gold);
            let grads = pass.tape.backward_scaled(loss_var, scale);
            pass.binder.accumulate(&mut self.store, &grads, 1.0);
            bd.scale(scale);
            totals.add(&bd);
        }
        Ok(totals)
    }

    /// Run the full pipeline on one sentence and decode the final typed
    /// graph. Deterministic: evaluation mode assigns identifiers in rank
    /// order and disables dropout.
    pub fn predict(&self, sentence: &Sentence) -> Result<Prediction> {
        let mut rng = SeededRng::new(0);
        let pass = self.forward(sentence, &ForwardOptions::default(), &mut rng)?;
        let structure = self.decode_pass(&pass);
        debug_assert!(self.check_structure(&pass, &structure));

        let node_spans = pass.node_spans();
        let node_cls = pass.tape.value(pass.node_cls_logits);
        let edge_cls = pass.tape.value(pass.edge_cls_logits);

        // Keep entities whose predicted class is not the reserved negative.
        let mut entities = Vec::new();
        let mut entity_of_node: Vec<Option<usize>> = alloc::vec![None; pass.graph.num_nodes()];
        for &n in &structure.nodes {
            let label = argmax(node_cls.row(n));
            if label != 0 {
                entity_of_node[n] = Some(entities.len());
                entities.push(PredictedEntity {
                    span: node_spans[n],
                    label: self.schema.entity_types[label].clone(),
                });
            }
        }
        // Relations survive when classified positive and both endpoints
        // survived entity classification.
        let mut relations = Vec::new();
        for &e in &structure.edges {
            let label = argmax(edge_cls.row(e));
            if label == 0 {
                continue;
            }
            let edge = &pass.graph.edges[e];
            if let (Some(head), Some(tail)) =
                (entity_of_node[edge.source], entity_of_node[edge.target])
            {
                relations.push(PredictedRelation {
                    head,
                    tail,
                    label: self.schema.relation_types[label].clone(),
                });
            }
        }
        Ok(Prediction {
            ie: IeGraph { entities, relations },
            initial: pass.graph.clone(),
            node_keep: pass.node_keep_probs(),
            edge_keep: pass.edge_keep_probs(),
            structure,
        })
    }

    /// Decode post-conditions: every kept edge has kept endpoints, and in
    /// flat mode kept spans are pairwise non-overlapping.
    fn check_structure(&self, pass: &SentencePass, s: &FinalStructure) -> bool {
        let endpoints_ok = s.edges.iter().all(|&e| {
            let edge = &pass.graph.edges[e];
            s.nodes.contains(&edge.source) && s.nodes.contains(&edge.target)
        });
        if !endpoints_ok {
            return false;
        }
        if self.config.decode.flat {
            let spans = pass.node_spans();
            for (i, &a) in s.nodes.iter().enumerate() {
                for &b in s.nodes.iter().skip(i + 1) {
                    if spans[a].overlaps(&spans[b]) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn force_gold_nodes(sel: &mut Vec<usize>, gold: &GoldAssignment) {
    for (i, &label) in gold.node_labels.iter().enumerate() {
        if label != 0 && !sel.contains(&i) {
            sel.push(i);
        }
    }
}

fn force_gold_edges(
    sel: &mut Vec<usize>,
    pairs: &[(usize, usize)],
    node_sel: &[usize],
    spans: &[Span],
    gold: &GoldAssignment,
) {
    for (p, &(a, b)) in pairs.iter().enumerate() {
        if sel.contains(&p) {
            continue;
        }
        if gold.edge_delta(spans[node_sel[a]], spans[node_sel[b]]) == 1.0 {
            sel.push(p);
        }
    }
}
