//! Property tests and independent-oracle comparisons for the pure
//! algorithmic pieces: span enumeration, top-K selection, greedy decoding,
//! decode post-conditions, and the tuple-set scorers.

use proptest::prelude::*;
use std::collections::BTreeSet;

use textgraph_core::data::{GoldEntity, GoldRelation, Sentence, Span};
use textgraph_core::edit::{decode_structure, greedy_flat_decode};
use textgraph_core::graph::select_top_k;
use textgraph_core::metrics::{score_entities, score_relations, Counts};
use textgraph_core::model::{IeGraph, PredictedEntity, PredictedRelation};
use textgraph_core::rng::SeededRng;

// ---------------------------------------------------------------------
// Independent oracles. These re-implement the contracts from scratch and
// must stay independent of the library code paths they check.
// ---------------------------------------------------------------------

/// Greedy simulation oracle: scan a score-sorted copy, keeping a span when
/// it overlaps nothing kept so far.
fn greedy_oracle(cands: &[(Span, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    // Selection order: probability desc, then start asc, width asc, index.
    order.sort_by(|&a, &b| {
        cands[b]
            .1
            .partial_cmp(&cands[a].1)
            .unwrap()
            .then(cands[a].0.start.cmp(&cands[b].0.start))
            .then((cands[a].0.end - cands[a].0.start).cmp(&(cands[b].0.end - cands[b].0.start)))
            .then(a.cmp(&b))
    });
    let mut used: Vec<bool> = Vec::new();
    let mut taken: Vec<Span> = Vec::new();
    let mut out = Vec::new();
    used.resize(cands.len(), false);
    for idx in order {
        let span = cands[idx].0;
        let mut free = true;
        for t in &taken {
            let disjoint = span.end < t.start || t.end < span.start;
            if !disjoint {
                free = false;
                break;
            }
        }
        if free {
            taken.push(span);
            out.push(idx);
        }
    }
    out
}

/// Brute-force tuple counting without any set machinery.
fn entity_counts_oracle(pred: &[(usize, usize, String)], gold: &[(usize, usize, String)]) -> Counts {
    let dedup = |items: &[(usize, usize, String)]| -> Vec<(usize, usize, String)> {
        let mut v = items.to_vec();
        v.sort();
        v.dedup();
        v
    };
    let p = dedup(pred);
    let g = dedup(gold);
    let mut tp = 0;
    for item in &p {
        if g.iter().any(|x| x == item) {
            tp += 1;
        }
    }
    Counts { tp, fp: p.len() - tp, fn_: g.len() - tp }
}

// ---------------------------------------------------------------------
// Random-case generators (seeded, not proptest) for the bulk oracles.
// ---------------------------------------------------------------------

fn random_candidates(rng: &mut SeededRng, len: usize, count: usize) -> Vec<(Span, f64)> {
    (0..count)
        .map(|_| {
            let start = rng.below(len);
            let width = 1 + rng.below(4.min(len - start));
            // Quantized probabilities exercise tie handling.
            let p = (rng.below(20) as f64) / 20.0;
            (Span::new(start, start + width - 1), p)
        })
        .collect()
}

#[test]
fn greedy_matches_simulation_oracle_on_1000_cases() {
    let mut rng = SeededRng::new(101);
    for case in 0..1000 {
        let len = 3 + rng.below(12);
        let count = 1 + rng.below(12);
        let cands = random_candidates(&mut rng, len, count);
        let got = greedy_flat_decode(&cands);
        let want = greedy_oracle(&cands);
        assert_eq!(got, want, "case {case}: {cands:?}");
    }
}

#[test]
fn decode_postconditions_hold_on_1000_cases() {
    let mut rng = SeededRng::new(202);
    for _ in 0..1000 {
        let len = 3 + rng.below(10);
        let n = 1 + rng.below(8);
        let spans: Vec<Span> = random_candidates(&mut rng, len, n).into_iter().map(|(s, _)| s).collect();
        let node_keep: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let mut edges = Vec::new();
        if n >= 2 {
            for _ in 0..rng.below(2 * n) {
                let a = rng.below(n);
                let mut b = rng.below(n);
                if a == b {
                    b = (b + 1) % n;
                }
                edges.push((a, b));
            }
        }
        let edge_keep: Vec<f64> = (0..edges.len()).map(|_| rng.uniform()).collect();
        let flat = rng.below(2) == 0;
        let out = decode_structure(&spans, &node_keep, &edges, &edge_keep, 0.5, flat);
        for &e in &out.edges {
            let (a, b) = edges[e];
            assert!(out.nodes.contains(&a) && out.nodes.contains(&b), "dangling edge endpoint");
        }
        if flat {
            for (i, &a) in out.nodes.iter().enumerate() {
                for &b in out.nodes.iter().skip(i + 1) {
                    assert!(!spans[a].overlaps(&spans[b]), "overlap in flat mode");
                }
            }
        }
        for &nidx in &out.nodes {
            assert!(node_keep[nidx] > 0.5, "kept node below threshold");
        }
    }
}

#[test]
fn greedy_is_monotone_in_the_top_probability() {
    // Raising the probability of an already-chosen top node never evicts it.
    let mut rng = SeededRng::new(303);
    for _ in 0..300 {
        let cands = random_candidates(&mut rng, 10, 6);
        let picked = greedy_flat_decode(&cands);
        if picked.is_empty() {
            continue;
        }
        let first = picked[0];
        let mut boosted = cands.clone();
        boosted[first].1 = (boosted[first].1 + 1.5).min(5.0);
        let picked2 = greedy_flat_decode(&boosted);
        assert!(picked2.contains(&first));
    }
}

fn random_ie_pair(rng: &mut SeededRng) -> (IeGraph, Sentence) {
    let len = 8 + rng.below(6);
    let types = ["PER", "ORG", "LOC"];
    let rels = ["r0", "r1"];
    let mk_entities = |rng: &mut SeededRng, count: usize| -> Vec<(usize, usize, String)> {
        (0..count)
            .map(|_| {
                let s = rng.below(len - 1);
                let e = s + rng.below(2);
                (s, e, types[rng.below(3)].to_string())
            })
            .collect()
    };
    let gold_count = 1 + rng.below(4);
    let gold_ents = mk_entities(rng, gold_count);
    let pred_count = rng.below(5);
    let pred_ents = mk_entities(rng, pred_count);
    let mk_relations = |rng: &mut SeededRng, n_ents: usize, count: usize| -> Vec<(usize, usize, String)> {
        if n_ents < 2 {
            return Vec::new();
        }
        (0..count)
            .filter_map(|_| {
                let h = rng.below(n_ents);
                let t = rng.below(n_ents);
                if h == t {
                    None
                } else {
                    Some((h, t, rels[rng.below(2)].to_string()))
                }
            })
            .collect()
    };
    let gold_rel_count = rng.below(4);
    let gold_rels_raw = mk_relations(rng, gold_ents.len(), gold_rel_count);
    let pred_rel_count = rng.below(4);
    let pred_rels = mk_relations(rng, pred_ents.len(), pred_rel_count);

    // Gold sentences cannot carry duplicate relations; dedup.
    let gold_rels: Vec<_> = gold_rels_raw
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let sentence = Sentence {
        tokens: (0..len).map(|i| format!("t{i}")).collect(),
        entities: gold_ents
            .iter()
            .map(|&(s, e, ref l)| GoldEntity { span: Span::new(s, e), label: l.clone() })
            .collect(),
        relations: gold_rels
            .iter()
            .map(|&(h, t, ref l)| GoldRelation { head: h, tail: t, label: l.clone() })
            .collect(),
        id: None,
    };
    sentence.validate().expect("generated gold must validate");
    let pred = IeGraph {
        entities: pred_ents
            .iter()
            .map(|&(s, e, ref l)| PredictedEntity { span: Span::new(s, e), label: l.clone() })
            .collect(),
        relations: pred_rels
            .iter()
            .map(|&(h, t, ref l)| PredictedRelation { head: h, tail: t, label: l.clone() })
            .collect(),
    };
    (pred, sentence)
}

#[test]
fn entity_scorer_matches_brute_force_oracle_on_1000_cases() {
    let mut rng = SeededRng::new(404);
    for _ in 0..1000 {
        let (pred, gold) = random_ie_pair(&mut rng);
        let got = score_entities(&pred, &gold);
        let p: Vec<(usize, usize, String)> = pred
            .entities
            .iter()
            .map(|e| (e.span.start, e.span.end, e.label.clone()))
            .collect();
        let g: Vec<(usize, usize, String)> = gold
            .entities
            .iter()
            .map(|e| (e.span.start, e.span.end, e.label.clone()))
            .collect();
        assert_eq!(got, entity_counts_oracle(&p, &g));
    }
}

#[test]
fn relation_scorer_matches_tuple_oracle_and_strictness_is_monotone() {
    // Relation tuples are flattened into entity-tuple shape for the same
    // brute-force counter: (head fields, tail fields, label) -> lexical key.
    let mut rng = SeededRng::new(505);
    for _ in 0..1000 {
        let (pred, gold) = random_ie_pair(&mut rng);
        for strict in [false, true] {
            let got = score_relations(&pred, &gold, strict);
            let flatten_pred: Vec<(usize, usize, String)> = pred
                .relations
                .iter()
                .map(|r| {
                    let h = &pred.entities[r.head];
                    let t = &pred.entities[r.tail];
                    let types = if strict {
                        format!("{}|{}", h.label, t.label)
                    } else {
                        String::new()
                    };
                    (
                        h.span.start * 1000 + h.span.end,
                        t.span.start * 1000 + t.span.end,
                        format!("{}|{}", r.label, types),
                    )
                })
                .collect();
            let flatten_gold: Vec<(usize, usize, String)> = gold
                .relations
                .iter()
                .map(|r| {
                    let h = &gold.entities[r.head];
                    let t = &gold.entities[r.tail];
                    let types = if strict {
                        format!("{}|{}", h.label, t.label)
                    } else {
                        String::new()
                    };
                    (
                        h.span.start * 1000 + h.span.end,
                        t.span.start * 1000 + t.span.end,
                        format!("{}|{}", r.label, types),
                    )
                })
                .collect();
            assert_eq!(got, entity_counts_oracle(&flatten_pred, &flatten_gold));
        }
        let relaxed = score_relations(&pred, &gold, false);
        let strict = score_relations(&pred, &gold, true);
        assert!(strict.tp <= relaxed.tp, "REL+ TP must not exceed REL TP");
    }
}

// ---------------------------------------------------------------------
// proptest invariants
// ---------------------------------------------------------------------

proptest! {
    #[test]
    fn span_count_matches_closed_form(len in 1usize..24, width in 1usize..14) {
        let spans = textgraph_core::data::enumerate_spans(len, width);
        let expect: usize = (0..len).map(|i| width.min(len - i)).sum();
        prop_assert_eq!(spans.len(), expect);
        // Lexicographic order and width bound.
        for w in spans.windows(2) {
            prop_assert!((w[0].start, w[0].end) < (w[1].start, w[1].end));
        }
        for s in &spans {
            prop_assert!(s.width() <= width && s.end < len);
        }
    }

    #[test]
    fn top_k_is_invariant_under_monotone_transforms(
        scores in proptest::collection::vec(-100.0f64..100.0, 0..40),
        k in 1usize..12,
    ) {
        let transformed: Vec<f64> = scores.iter().map(|&s| 2.0 * s + 1.0).collect();
        prop_assert_eq!(select_top_k(&scores, k), select_top_k(&transformed, k));
    }

    #[test]
    fn top_k_returns_the_k_largest(
        scores in proptest::collection::vec(-10.0f64..10.0, 0..30),
        k in 1usize..10,
    ) {
        let picked = select_top_k(&scores, k);
        prop_assert_eq!(picked.len(), k.min(scores.len()));
        let picked_set: BTreeSet<usize> = picked.iter().copied().collect();
        prop_assert_eq!(picked_set.len(), picked.len());
        // No unpicked score strictly exceeds a picked one, and the result
        // is sorted by descending score.
        let min_picked = picked.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        for (i, &s) in scores.iter().enumerate() {
            if !picked_set.contains(&i) {
                prop_assert!(s <= min_picked);
            }
        }
        for w in picked.windows(2) {
            prop_assert!(scores[w[0]] >= scores[w[1]]);
        }
    }
}
