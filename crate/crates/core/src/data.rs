//! Sentences, spans, label vocabularies, and gold graph construction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Reserved negative entity class, always index 0.
pub const NON_ENTITY: &str = "non-entity";
/// Reserved negative relation class, always index 0.
pub const NO_RELATION: &str = "no-relation";

/// Inclusive token interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GoldEntity {
    pub span: Span,
    pub label: String,
}

/// Directed relation between two gold entities, referenced by index.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GoldRelation {
    pub head: usize,
    pub tail: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub entities: Vec<GoldEntity>,
    pub relations: Vec<GoldRelation>,
    pub id: Option<String>,
}

impl Sentence {
    /// Construct and validate in one step.
    pub fn new(
        tokens: Vec<String>,
        entities: Vec<GoldEntity>,
        relations: Vec<GoldRelation>,
        id: Option<String>,
    ) -> Result<Self> {
        let s = Self { tokens, entities, relations, id };
        s.validate()?;
        Ok(s)
    }

    fn describe(&self) -> String {
        self.id.clone().unwrap_or_else(|| "<unnamed>".to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.tokens.len();
        if len == 0 {
            return Err(Error::Validation(format!(
                "sentence {} has no tokens",
                self.describe()
            )));
        }
        for e in &self.entities {
            if e.span.start > e.span.end || e.span.end >= len {
                return Err(Error::Validation(format!(
                    "sentence {}: entity span ({}, {}) out of range for {} tokens",
                    self.describe(),
                    e.span.start,
                    e.span.end,
                    len
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for r in &self.relations {
            if r.head >= self.entities.len() || r.tail >= self.entities.len() {
                return Err(Error::Validation(format!(
                    "sentence {}: relation references entity {} but only {} entities exist",
                    self.describe(),
                    r.head.max(r.tail),
                    self.entities.len()
                )));
            }
            if r.head == r.tail {
                return Err(Error::Validation(format!(
                    "sentence {}: relation with identical head and tail {}",
                    self.describe(),
                    r.head
                )));
            }
            if !seen.insert((r.head, r.tail, r.label.clone())) {
                return Err(Error::Validation(format!(
                    "sentence {}: duplicate relation ({}, {}, {})",
                    self.describe(),
                    r.head,
                    r.tail,
                    r.label
                )));
            }
        }
        Ok(())
    }

    /// Enforce the configured length cap (callers reject, never truncate).
    pub fn check_length(&self, cap: usize) -> Result<()> {
        if self.tokens.len() > cap {
            return Err(Error::SentenceTooLong { len: self.tokens.len(), cap });
        }
        Ok(())
    }
}

/// All spans (i, j) with i <= j, width <= `max_span_width`, j < sentence
/// length, in lexicographic (start, end) order.
pub fn enumerate_spans(len: usize, max_span_width: usize) -> Vec<Span> {
    assert!(max_span_width >= 1, "max_span_width must be >= 1");
    let mut spans = Vec::new();
    for start in 0..len {
        let last = (start + max_span_width - 1).min(len.saturating_sub(1));
        for end in start..=last {
            spans.push(Span::new(start, end));
        }
    }
    spans
}

/// Entity and relation label vocabularies. The reserved negative classes
/// occupy index 0 of each.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelSchema {
    pub entity_types: Vec<String>,
    pub relation_types: Vec<String>,
}

impl LabelSchema {
    /// Build from a training split: labels are collected in sorted order so
    /// the vocabulary does not depend on corpus file order.
    pub fn from_sentences(sentences: &[Sentence]) -> Result<Self> {
        let mut ents = BTreeSet::new();
        let mut rels = BTreeSet::new();
        for s in sentences {
            for e in &s.entities {
                if e.label == NON_ENTITY {
                    return Err(Error::Validation(format!(
                        "entity label `{NON_ENTITY}` is reserved"
                    )));
                }
                ents.insert(e.label.clone());
            }
            for r in &s.relations {
                if r.label == NO_RELATION {
                    return Err(Error::Validation(format!(
                        "relation label `{NO_RELATION}` is reserved"
                    )));
                }
                rels.insert(r.label.clone());
            }
        }
        let mut entity_types = Vec::with_capacity(ents.len() + 1);
        entity_types.push(NON_ENTITY.to_string());
        entity_types.extend(ents);
        let mut relation_types = Vec::with_capacity(rels.len() + 1);
        relation_types.push(NO_RELATION.to_string());
        relation_types.extend(rels);
        Ok(Self { entity_types, relation_types })
    }

    pub fn entity_id(&self, label: &str) -> Result<usize> {
        self.entity_types
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn relation_id(&self, label: &str) -> Result<usize> {
        self.relation_types
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn num_entity_types(&self) -> usize {
        self.entity_types.len()
    }

    pub fn num_relation_types(&self) -> usize {
        self.relation_types.len()
    }
}

/// Gold labels projected onto the candidate span set of one sentence.
///
/// `node_labels[i]` is the entity class index of `spans[i]` (0 when the span
/// is not a gold entity). `edge_labels` maps directed span pairs of gold
/// relations to relation class indices; absent pairs mean `no-relation`.
#[derive(Debug, Clone)]
pub struct GoldAssignment {
    pub node_labels: Vec<usize>,
    pub edge_labels: BTreeMap<(Span, Span), usize>,
    /// Gold entities whose width exceeds the span cap; they cannot be
    /// recovered by any candidate and are excluded from training targets.
    pub unreachable_entities: usize,
    /// Gold relations with at least one unreachable endpoint.
    pub unreachable_relations: usize,
}

impl GoldAssignment {
    pub fn build(sentence: &Sentence, spans: &[Span], schema: &LabelSchema) -> Result<Self> {
        let span_index: BTreeMap<Span, usize> =
            spans.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut node_labels = alloc::vec![0usize; spans.len()];
        let mut unreachable_entities = 0;
        let mut entity_reachable = Vec::with_capacity(sentence.entities.len());
        for e in &sentence.entities {
            let class = schema.entity_id(&e.label)?;
            match span_index.get(&e.span) {
                Some(&i) => {
                    node_labels[i] = class;
                    entity_reachable.push(true);
                }
                None => {
                    unreachable_entities += 1;
                    entity_reachable.push(false);
                }
            }
        }
        let mut edge_labels = BTreeMap::new();
        let mut unreachable_relations = 0;
        for r in &sentence.relations {
            let class = schema.relation_id(&r.label)?;
            if entity_reachable[r.head] && entity_reachable[r.tail] {
                let head = sentence.entities[r.head].span;
                let tail = sentence.entities[r.tail].span;
                edge_labels.insert((head, tail), class);
            } else {
                unreachable_relations += 1;
            }
        }
        Ok(Self { node_labels, edge_labels, unreachable_entities, unreachable_relations })
    }

    /// Node indicator: 1.0 iff the span is a gold entity.
    pub fn node_delta(&self, span_idx: usize) -> f64 {
        if self.node_labels[span_idx] != 0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn edge_label(&self, head: Span, tail: Span) -> usize {
        self.edge_labels.get(&(head, tail)).copied().unwrap_or(0)
    }

    pub fn edge_delta(&self, head: Span, tail: Span) -> f64 {
        if self.edge_label(head, tail) != 0 {
            1.0
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn sample_sentence() -> Sentence {
        Sentence::new(
            toks(&["John", "lives", "in", "Paris"]),
            vec![
                GoldEntity { span: Span::new(0, 0), label: "Peop".into() },
                GoldEntity { span: Span::new(3, 3), label: "Loc".into() },
            ],
            vec![GoldRelation { head: 0, tail: 1, label: "Live_In".into() }],
            Some("s0".into()),
        )
        .unwrap()
    }

    #[test]
    fn enumerate_matches_hand_case() {
        let spans = enumerate_spans(3, 2);
        let expect: Vec<Span> = [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)]
            .iter()
            .map(|&(s, e)| Span::new(s, e))
            .collect();
        assert_eq!(spans, expect);
    }

    #[test]
    fn enumerate_single_token_wide_cap() {
        assert_eq!(enumerate_spans(1, 12), vec![Span::new(0, 0)]);
    }

    #[test]
    fn enumerate_count_formula() {
        // |spans| = sum_i min(w, L - i), checked by brute force.
        for len in 1..=20 {
            for width in 1..=13 {
                let expect: usize = (0..len).map(|i| width.min(len - i)).sum();
                assert_eq!(enumerate_spans(len, width).len(), expect, "L={len} w={width}");
            }
        }
    }

    #[test]
    fn out_of_range_entity_rejected() {
        let err = Sentence::new(
            toks(&["a", "b", "c", "d"]),
            vec![GoldEntity { span: Span::new(3, 5), label: "Loc".into() }],
            vec![],
            Some("bad".into()),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(msg) if msg.contains("bad")));
    }

    #[test]
    fn self_relation_rejected() {
        let err = Sentence::new(
            toks(&["a", "b"]),
            vec![GoldEntity { span: Span::new(0, 0), label: "X".into() }],
            vec![GoldRelation { head: 0, tail: 0, label: "R".into() }],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn schema_is_sorted_with_reserved_first() {
        let s = sample_sentence();
        let schema = LabelSchema::from_sentences(&[s]).unwrap();
        assert_eq!(schema.entity_types, vec!["non-entity", "Loc", "Peop"]);
        assert_eq!(schema.relation_types, vec!["no-relation", "Live_In"]);
        assert!(schema.entity_id("Other").is_err());
    }

    #[test]
    fn gold_assignment_basic() {
        let s = sample_sentence();
        let schema = LabelSchema::from_sentences(&[s.clone()]).unwrap();
        let spans = enumerate_spans(s.tokens.len(), 12);
        let gold = GoldAssignment::build(&s, &spans, &schema).unwrap();
        let idx_of = |sp: Span| spans.iter().position(|&x| x == sp).unwrap();
        assert_eq!(gold.node_labels[idx_of(Span::new(0, 0))], schema.entity_id("Peop").unwrap());
        assert_eq!(gold.node_delta(idx_of(Span::new(0, 0))), 1.0);
        assert_eq!(gold.node_labels[idx_of(Span::new(1, 1))], 0);
        assert_eq!(gold.node_delta(idx_of(Span::new(1, 1))), 0.0);
        // Directedness: only the stated ordered pair carries the relation.
        assert_eq!(gold.edge_delta(Span::new(0, 0), Span::new(3, 3)), 1.0);
        assert_eq!(gold.edge_delta(Span::new(3, 3), Span::new(0, 0)), 0.0);
        assert_eq!(gold.unreachable_entities, 0);
    }

    #[test]
    fn wide_gold_entity_reported_unreachable() {
        let tokens: Vec<String> = (0..16).map(|i| format!("t{i}")).collect();
        let s = Sentence::new(
            tokens,
            vec![
                GoldEntity { span: Span::new(0, 12), label: "Wide".into() },
                GoldEntity { span: Span::new(14, 14), label: "Wide".into() },
            ],
            vec![GoldRelation { head: 0, tail: 1, label: "R".into() }],
            None,
        )
        .unwrap();
        let schema = LabelSchema::from_sentences(&[s.clone()]).unwrap();
        let spans = enumerate_spans(s.tokens.len(), 12);
        let gold = GoldAssignment::build(&s, &spans, &schema).unwrap();
        assert_eq!(gold.unreachable_entities, 1);
        assert_eq!(gold.unreachable_relations, 1);
        assert!(gold.node_labels.iter().filter(|&&l| l != 0).count() == 1);
    }

    #[test]
    fn gold_round_trip_delta_set() {
        // The delta-1 span set equals gold entities intersected with the
        // enumerable candidates.
        let s = sample_sentence();
        let schema = LabelSchema::from_sentences(&[s.clone()]).unwrap();
        let spans = enumerate_spans(s.tokens.len(), 2);
        let gold = GoldAssignment::build(&s, &spans, &schema).unwrap();
        let positives: Vec<Span> = spans
            .iter()
            .enumerate()
            .filter(|(i, _)| gold.node_delta(*i) == 1.0)
            .map(|(_, &sp)| sp)
            .collect();
        let expected: Vec<Span> = s
            .entities
            .iter()
            .map(|e| e.span)
            .filter(|sp| spans.contains(sp))
            .collect();
        assert_eq!(positives, expected);
    }
}
