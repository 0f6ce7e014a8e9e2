//! Synthetic corpus generator for self-contained training checks.
//!
//! Entities are single marker tokens drawn from per-type marker pools; all
//! other positions carry filler tokens. Every position-ordered entity pair
//! gets a left-to-right relation whose type composes both endpoint types
//! ((head + tail) mod relation count), so relation labels cannot be read
//! off either endpoint alone.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{GoldEntity, GoldRelation, Sentence, Span};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub sentences: usize,
    pub vocab: usize,
    pub entity_types: usize,
    pub relation_types: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub max_entities: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            sentences: 32,
            vocab: 50,
            entity_types: 2,
            relation_types: 2,
            min_len: 8,
            max_len: 14,
            max_entities: 3,
            seed: 1,
        }
    }
}

/// Marker tokens per entity type.
const MARKERS_PER_TYPE: usize = 5;

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.entity_types == 0 || self.relation_types == 0 {
            return Err(Error::Config("need at least one entity and relation type".into()));
        }
        let markers = self.entity_types * MARKERS_PER_TYPE;
        if self.vocab <= markers {
            return Err(Error::Config(format!(
                "vocab {} too small for {markers} marker tokens",
                self.vocab
            )));
        }
        if self.min_len < 2 || self.min_len > self.max_len {
            return Err(Error::Config("need 2 <= min_len <= max_len".into()));
        }
        if self.max_entities == 0 || self.max_entities * 2 > self.min_len {
            return Err(Error::Config(
                "max_entities must be >= 1 and fit in min_len with gaps".into(),
            ));
        }
        Ok(())
    }

    pub fn entity_label(&self, t: usize) -> String {
        format!("T{t}")
    }

    pub fn relation_label(&self, r: usize) -> String {
        format!("R{r}")
    }

    fn marker_token(&self, entity_type: usize, k: usize) -> String {
        format!("e{entity_type}m{k}")
    }

    fn filler_token(&self, k: usize) -> String {
        format!("w{k}")
    }

    fn num_fillers(&self) -> usize {
        self.vocab - self.entity_types * MARKERS_PER_TYPE
    }
}

/// Relation type index for a (head type, tail type) pair.
pub fn relation_rule(head_type: usize, tail_type: usize, relation_types: usize) -> usize {
    (head_type + tail_type) % relation_types
}

pub fn generate(spec: &SynthSpec) -> Result<Vec<Sentence>> {
    spec.validate()?;
    let mut rng = SeededRng::derive(spec.seed, "synth");
    let mut out = Vec::with_capacity(spec.sentences);
    for n in 0..spec.sentences {
        out.push(generate_sentence(spec, &mut rng, n));
    }
    Ok(out)
}

fn generate_sentence(spec: &SynthSpec, rng: &mut SeededRng, index: usize) -> Sentence {
    let len = rng.range_inclusive(spec.min_len, spec.max_len);
    let want = rng.range_inclusive(2.min(spec.max_entities), spec.max_entities);

    // Entity positions: distinct, non-adjacent (so single-token markers
    // never touch), sorted left to right.
    let mut positions: Vec<usize> = Vec::new();
    let mut attempts = 0;
    while positions.len() < want && attempts < 200 {
        attempts += 1;
        let p = rng.below(len);
        if positions.iter().all(|&q| p.abs_diff(q) >= 2) {
            positions.push(p);
        }
    }
    positions.sort_unstable();

    let mut tokens: Vec<String> =
        (0..len).map(|_| spec.filler_token(rng.below(spec.num_fillers()))).collect();
    let mut entities = Vec::with_capacity(positions.len());
    let mut types = Vec::with_capacity(positions.len());
    for &p in &positions {
        let t = rng.below(spec.entity_types);
        let k = rng.below(MARKERS_PER_TYPE);
        tokens[p] = spec.marker_token(t, k);
        entities.push(GoldEntity { span: Span::new(p, p), label: spec.entity_label(t) });
        types.push(t);
    }

    // Left-to-right relations between every position-ordered pair.
    let mut relations = Vec::new();
    for i in 0..entities.len() {
        for j in (i + 1)..entities.len() {
            let r = relation_rule(types[i], types[j], spec.relation_types);
            relations.push(GoldRelation { head: i, tail: j, label: spec.relation_label(r) });
        }
    }

    Sentence { tokens, entities, relations, id: Some(format!("synth-{index}")) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelSchema;
    use crate::rng::token_bucket;
    use alloc::collections::BTreeSet;

    #[test]
    fn corpus_is_valid_and_reproducible() {
        let spec = SynthSpec::default();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
        for s in &a {
            s.validate().unwrap();
            assert!(!s.entities.is_empty());
        }
        let schema = LabelSchema::from_sentences(&a).unwrap();
        assert_eq!(schema.num_entity_types(), 3); // 2 + reserved
        assert_eq!(schema.num_relation_types(), 3); // 2 + reserved
    }

    #[test]
    fn relation_rule_composes_both_endpoints() {
        // With two types the rule is XOR: no single endpoint determines it.
        assert_eq!(relation_rule(0, 0, 2), 0);
        assert_eq!(relation_rule(1, 1, 2), 0);
        assert_eq!(relation_rule(0, 1, 2), 1);
        assert_eq!(relation_rule(1, 0, 2), 1);
    }

    #[test]
    fn relations_point_left_to_right() {
        let corpus = generate(&SynthSpec::default()).unwrap();
        for s in &corpus {
            for r in &s.relations {
                assert!(s.entities[r.head].span.start < s.entities[r.tail].span.start);
            }
        }
    }

    #[test]
    fn synthetic_tokens_hash_without_collisions_at_default_vocab() {
        // The toy backbone buckets tokens by hash; the default table size
        // must keep the synthetic vocabulary collision-free.
        let spec = SynthSpec::default();
        let vocab_size = crate::config::EncoderConfig::default().toy_vocab_size;
        let mut buckets = BTreeSet::new();
        let mut tokens = Vec::new();
        for k in 0..spec.num_fillers() {
            tokens.push(spec.filler_token(k));
        }
        for t in 0..spec.entity_types {
            for k in 0..MARKERS_PER_TYPE {
                tokens.push(spec.marker_token(t, k));
            }
        }
        assert_eq!(tokens.len(), spec.vocab);
        for tok in &tokens {
            assert!(
                buckets.insert(token_bucket(tok, vocab_size)),
                "hash collision for token {tok}"
            );
        }
    }
}
