//! Strict micro-averaged evaluation: ENT (exact boundary + type), REL
//! (boundary + relation type), REL+ (REL plus both entity types), and
//! label-confusion matrices over boundary-correct predictions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::{LabelSchema, Sentence, Span};
use crate::error::Result;
use crate::model::IeGraph;

/// Pooled true/false positive/negative counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// True when both prediction and gold were empty and the convention
    /// P = R = F1 = 1 was applied.
    pub empty_convention: bool,
}

impl MetricSummary {
    pub fn from_counts(c: Counts) -> Self {
        if c.tp + c.fp + c.fn_ == 0 {
            return Self {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                tp: 0,
                fp: 0,
                fn_: 0,
                empty_convention: true,
            };
        }
        let precision = if c.tp + c.fp == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fp) as f64 };
        let recall = if c.tp + c.fn_ == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1, tp: c.tp, fp: c.fp, fn_: c.fn_, empty_convention: false }
    }
}

/// Micro-averaged scores for one corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub ent: MetricSummary,
    pub rel: MetricSummary,
    pub rel_plus: MetricSummary,
    pub sentences: usize,
}

type EntityTuple = (Span, String);
/// (head span, head type, tail span, tail type, relation label); entity
/// types are empty strings under boundary-only (REL) matching.
type RelationTuple = (Span, String, Span, String, String);

fn pred_entity_set(pred: &IeGraph) -> BTreeSet<EntityTuple> {
    pred.entities.iter().map(|e| (e.span, e.label.clone())).collect()
}

fn gold_entity_set(gold: &Sentence) -> BTreeSet<EntityTuple> {
    gold.entities.iter().map(|e| (e.span, e.label.clone())).collect()
}

fn pred_relation_set(pred: &IeGraph, strict: bool) -> BTreeSet<RelationTuple> {
    pred.relations
        .iter()
        .map(|r| {
            let head = &pred.entities[r.head];
            let tail = &pred.entities[r.tail];
            let (ht, tt) = if strict {
                (head.label.clone(), tail.label.clone())
            } else {
                (String::new(), String::new())
            };
            (head.span, ht, tail.span, tt, r.label.clone())
        })
        .collect()
}

fn gold_relation_set(gold: &Sentence, strict: bool) -> BTreeSet<RelationTuple> {
    gold.relations
        .iter()
        .map(|r| {
            let head = &gold.entities[r.head];
            let tail = &gold.entities[r.tail];
            let (ht, tt) = if strict {
                (head.label.clone(), tail.label.clone())
            } else {
                (String::new(), String::new())
            };
            (head.span, ht, tail.span, tt, r.label.clone())
        })
        .collect()
}

fn set_counts<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> Counts {
    let tp = pred.intersection(gold).count();
    Counts { tp, fp: pred.len() - tp, fn_: gold.len() - tp }
}

/// Exact (start, end, type) matching on deduplicated tuple sets.
pub fn score_entities(pred: &IeGraph, gold: &Sentence) -> Counts {
    set_counts(&pred_entity_set(pred), &gold_entity_set(gold))
}

/// Directed relation matching. `strict` additionally requires both endpoint
/// entity types to match (REL+).
pub fn score_relations(pred: &IeGraph, gold: &Sentence, strict: bool) -> Counts {
    set_counts(&pred_relation_set(pred, strict), &gold_relation_set(gold, strict))
}

/// Pool per-sentence counts over a corpus and derive P/R/F1.
pub fn micro_report<'a, I>(pairs: I) -> MetricReport
where
    I: IntoIterator<Item = (&'a IeGraph, &'a Sentence)>,
{
    let mut ent = Counts::default();
    let mut rel = Counts::default();
    let mut rel_plus = Counts::default();
    let mut sentences = 0;
    for (pred, gold) in pairs {
        ent.add(score_entities(pred, gold));
        rel.add(score_relations(pred, gold, false));
        rel_plus.add(score_relations(pred, gold, true));
        sentences += 1;
    }
    MetricReport {
        ent: MetricSummary::from_counts(ent),
        rel: MetricSummary::from_counts(rel),
        rel_plus: MetricSummary::from_counts(rel_plus),
        sentences,
    }
}

/// Label-confusion matrix: one row per gold class plus `spurious`, one
/// column per predicted class plus `miss`. Diagonal cells are exact
/// matches; off-diagonal cells are boundary-correct label confusions.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// (classes + 1) x (classes + 1); last row is `spurious`, last column
    /// is `miss`. The bottom-right corner is structurally zero.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    fn new(classes: Vec<String>) -> Self {
        let n = classes.len() + 1;
        Self { classes, counts: alloc::vec![alloc::vec![0; n]; n] }
    }

    fn class_idx(&self, label: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| crate::error::Error::UnknownLabel(label.to_string()))
    }

    fn spurious_row(&self) -> usize {
        self.classes.len()
    }

    fn miss_col(&self) -> usize {
        self.classes.len()
    }

    /// Count confusions between gold and predicted tuples sharing a
    /// boundary key. Consumes each tuple at most once so marginal totals
    /// reconcile with TP/FP/FN.
    fn tally<K: Ord + Clone>(
        &mut self,
        gold: &BTreeSet<(K, String)>,
        pred: &BTreeSet<(K, String)>,
    ) -> Result<()> {
        let mut pred_by_key: BTreeMap<K, Vec<(String, bool)>> = BTreeMap::new();
        for (key, label) in pred {
            pred_by_key.entry(key.clone()).or_default().push((label.clone(), false));
        }
        let mut unmatched_gold: Vec<(K, String)> = Vec::new();
        for (key, label) in gold {
            let exact = pred_by_key.get_mut(key).and_then(|cands| {
                cands.iter_mut().find(|(l, used)| !used && l == label).map(|slot| slot.1 = true)
            });
            match exact {
                Some(()) => {
                    let i = self.class_idx(label)?;
                    self.counts[i][i] += 1;
                }
                None => unmatched_gold.push((key.clone(), label.clone())),
            }
        }
        for (key, label) in unmatched_gold {
            let gi = self.class_idx(&label)?;
            let confused = pred_by_key.get_mut(&key).and_then(|cands| {
                cands.iter_mut().find(|(_, used)| !used).map(|slot| {
                    slot.1 = true;
                    slot.0.clone()
                })
            });
            match confused {
                Some(pred_label) => {
                    let pi = self.class_idx(&pred_label)?;
                    self.counts[gi][pi] += 1;
                }
                None => {
                    let miss = self.miss_col();
                    self.counts[gi][miss] += 1;
                }
            }
        }
        let spurious = self.spurious_row();
        for cands in pred_by_key.values() {
            for (label, used) in cands {
                if !used {
                    let pi = self.class_idx(label)?;
                    self.counts[spurious][pi] += 1;
                }
            }
        }
        Ok(())
    }

    /// Sum of the diagonal (exact matches).
    pub fn diagonal_total(&self) -> usize {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Total over gold rows (TP + FN of the underlying scorer).
    pub fn gold_total(&self) -> usize {
        self.counts[..self.classes.len()].iter().map(|row| row.iter().sum::<usize>()).sum()
    }

    /// Total over prediction columns (TP + FP of the underlying scorer).
    pub fn pred_total(&self) -> usize {
        self.counts
            .iter()
            .map(|row| row[..self.classes.len()].iter().sum::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfusionReport {
    pub entity: ConfusionMatrix,
    pub relation: ConfusionMatrix,
}

/// Build entity and relation confusion matrices over a corpus. Entity
/// confusions are keyed by span boundaries; relation confusions by the
/// (head span, tail span) pair.
pub fn confusion_report<'a, I>(pairs: I, schema: &LabelSchema) -> Result<ConfusionReport>
where
    I: IntoIterator<Item = (&'a IeGraph, &'a Sentence)>,
{
    let mut entity = ConfusionMatrix::new(schema.entity_types[1..].to_vec());
    let mut relation = ConfusionMatrix::new(schema.relation_types[1..].to_vec());
    for (pred, gold) in pairs {
        let pe: BTreeSet<(Span, String)> = pred_entity_set(pred);
        let ge: BTreeSet<(Span, String)> = gold_entity_set(gold);
        entity.tally(&ge, &pe)?;

        let pr: BTreeSet<((Span, Span), String)> = pred_relation_set(pred, false)
            .into_iter()
            .map(|(hs, _, ts, _, label)| ((hs, ts), label))
            .collect();
        let gr: BTreeSet<((Span, Span), String)> = gold_relation_set(gold, false)
            .into_iter()
            .map(|(hs, _, ts, _, label)| ((hs, ts), label))
            .collect();
        relation.tally(&gr, &pr)?;
    }
    Ok(ConfusionReport { entity, relation })
}
