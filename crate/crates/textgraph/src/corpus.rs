//! The JSON-lines corpus format and the nested-document converter.
//!
//! One object per line:
//! `{"tokens": [str], "entities": [[start, end, type]], "relations":
//! [[head_entity_idx, tail_entity_idx, type]], "id": optional}` with
//! inclusive span ends.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use textgraph_core::data::{GoldEntity, GoldRelation, LabelSchema, Sentence, Span};

use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    tokens: Vec<String>,
    #[serde(default)]
    entities: Vec<(usize, usize, String)>,
    #[serde(default)]
    relations: Vec<(usize, usize, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

impl Record {
    fn into_sentence(self, fallback_id: String) -> textgraph_core::Result<Sentence> {
        Sentence::new(
            self.tokens,
            self.entities
                .into_iter()
                .map(|(start, end, label)| GoldEntity { span: Span::new(start, end), label })
                .collect(),
            self.relations
                .into_iter()
                .map(|(head, tail, label)| GoldRelation { head, tail, label })
                .collect(),
            Some(self.id.unwrap_or(fallback_id)),
        )
    }

    fn from_sentence(s: &Sentence) -> Self {
        Self {
            tokens: s.tokens.clone(),
            entities: s
                .entities
                .iter()
                .map(|e| (e.span.start, e.span.end, e.label.clone()))
                .collect(),
            relations: s
                .relations
                .iter()
                .map(|r| (r.head, r.tail, r.label.clone()))
                .collect(),
            id: s.id.clone(),
        }
    }
}

/// Load and validate a JSON-lines corpus. Parse failures carry the line
/// number; validation failures name the example id.
pub fn load_jsonl(path: &Path) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let sentence = record
            .into_sentence(format!("line-{}", lineno + 1))
            .map_err(Error::Core)?;
        out.push(sentence);
    }
    Ok(out)
}

pub fn save_jsonl(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for s in sentences {
        let line = serde_json::to_string(&Record::from_sentence(s)).expect("record serializes");
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Corpus conventions inside a data directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn file_name(&self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Dev => "dev.jsonl",
            Split::Test => "test.jsonl",
        }
    }
}

/// Load `<dir>/<split>.jsonl`.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<Sentence>> {
    load_jsonl(&dir.join(split.file_name()))
}

/// Every gold label must already be in the schema (which is built from the
/// training split only).
pub fn validate_labels(corpus: &[Sentence], schema: &LabelSchema) -> Result<()> {
    for s in corpus {
        for e in &s.entities {
            schema.entity_id(&e.label)?;
        }
        for r in &s.relations {
            schema.relation_id(&r.label)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Nested-document converter.
// ---------------------------------------------------------------------

/// The common nested release format: one JSON document per line, sentences
/// as token lists, span indices counted over the whole document, inclusive
/// ends, relations referencing spans by their boundaries.
#[derive(Debug, Deserialize)]
struct NestedDoc {
    sentences: Vec<Vec<String>>,
    #[serde(default)]
    ner: Vec<Vec<(usize, usize, String)>>,
    #[serde(default)]
    relations: Vec<Vec<(usize, usize, usize, usize, String)>>,
    #[serde(default, alias = "doc_key")]
    id: Option<String>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConvertStats {
    pub documents: usize,
    pub sentences: usize,
    pub entities: usize,
    pub relations: usize,
    /// Relations whose endpoints were not annotated entity spans of the
    /// same sentence (includes cross-sentence relations).
    pub skipped_relations: usize,
}

/// Convert the nested `{"sentences": ...}` document format into the flat
/// per-sentence JSON-lines corpus.
pub fn convert_nested(src: &Path, dst: &Path) -> Result<ConvertStats> {
    let text = std::fs::read_to_string(src).map_err(|e| Error::io(src, e))?;
    let mut stats = ConvertStats::default();
    let mut sentences = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: NestedDoc = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: src.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let doc_id = doc.id.clone().unwrap_or_else(|| format!("doc-{}", stats.documents));
        stats.documents += 1;
        let mut offset = 0usize;
        for (k, tokens) in doc.sentences.iter().enumerate() {
            let ner = doc.ner.get(k).cloned().unwrap_or_default();
            let rels = doc.relations.get(k).cloned().unwrap_or_default();
            let mut entities = Vec::new();
            for (start, end, label) in ner {
                let (s, e) = (start.checked_sub(offset), end.checked_sub(offset));
                match (s, e) {
                    (Some(s), Some(e)) if e < tokens.len() && s <= e => {
                        entities.push(GoldEntity { span: Span::new(s, e), label });
                    }
                    _ => {
                        return Err(Error::Convert(format!(
                            "{doc_id}: entity ({start}, {end}) outside sentence {k}"
                        )))
                    }
                }
            }
            let find = |s: usize, e: usize| -> Option<usize> {
                let (s, e) = (s.checked_sub(offset)?, e.checked_sub(offset)?);
                entities.iter().position(|ent| ent.span == Span::new(s, e))
            };
            let mut relations = Vec::new();
            for (hs, he, ts, te, label) in rels {
                match (find(hs, he), find(ts, te)) {
                    (Some(head), Some(tail)) if head != tail => {
                        relations.push(GoldRelation { head, tail, label });
                    }
                    _ => stats.skipped_relations += 1,
                }
            }
            relations.sort_by(|a, b| (a.head, a.tail, &a.label).cmp(&(b.head, b.tail, &b.label)));
            relations.dedup();
            stats.entities += entities.len();
            stats.relations += relations.len();
            stats.sentences += 1;
            let sentence = Sentence::new(
                tokens.clone(),
                entities,
                relations,
                Some(format!("{doc_id}:{k}")),
            )
            .map_err(Error::Core)?;
            sentences.push(sentence);
            offset += tokens.len();
        }
    }
    save_jsonl(dst, &sentences)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_all_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let line = r#"{"tokens":["John","lives","in","Paris"],"entities":[[0,0,"Peop"],[3,3,"Loc"]],"relations":[[0,1,"Live_In"]]}"#;
        std::fs::write(&path, format!("{line}\n")).unwrap();
        let corpus = load_jsonl(&path).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus[0].entities.len(), 2);
        assert_eq!(corpus[0].relations.len(), 1);
        assert_eq!(corpus[0].relations[0].label, "Live_In");

        let path2 = dir.path().join("copy.jsonl");
        save_jsonl(&path2, &corpus).unwrap();
        let again = load_jsonl(&path2).unwrap();
        assert_eq!(corpus, again);
    }

    #[test]
    fn empty_file_is_an_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_jsonl(&path).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_span_is_a_validation_error_naming_the_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            r#"{"tokens":["a","b","c","d"],"entities":[[3,5,"Loc"]],"relations":[],"id":"bad-example"}"#,
        )
        .unwrap();
        let err = load_jsonl(&path).unwrap_err();
        assert!(err.to_string().contains("bad-example"), "got: {err}");
    }

    #[test]
    fn malformed_json_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.jsonl");
        std::fs::write(&path, "{\"tokens\":[\"a\"],\"entities\":[],\"relations\":[]}\nnot json\n").unwrap();
        let err = load_jsonl(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn nested_converter_rebases_offsets_and_skips_cross_sentence() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("nested.json");
        let dst = dir.path().join("flat.jsonl");
        // Two sentences; document-level offsets. One in-sentence relation,
        // one cross-sentence relation (skipped).
        let doc = serde_json::json!({
            "doc_key": "docA",
            "sentences": [["Alice", "works"], ["Bob", "leads", "Acme"]],
            "ner": [[[0, 0, "PER"]], [[2, 2, "PER"], [4, 4, "ORG"]]],
            "relations": [[], [[2, 2, 4, 4, "leads"], [0, 0, 4, 4, "knows"]]],
        });
        std::fs::write(&src, format!("{doc}\n")).unwrap();
        let stats = convert_nested(&src, &dst).unwrap();
        assert_eq!(stats.sentences, 2);
        assert_eq!(stats.entities, 3);
        assert_eq!(stats.relations, 1);
        assert_eq!(stats.skipped_relations, 1);
        let corpus = load_jsonl(&dst).unwrap();
        assert_eq!(corpus[1].entities[0].span, Span::new(0, 0));
        assert_eq!(corpus[1].entities[1].span, Span::new(2, 2));
        assert_eq!(corpus[1].relations.len(), 1);
        assert_eq!(corpus[1].id.as_deref(), Some("docA:1"));
    }
}
