//! Run configuration: defaults <- config file <- command-line overrides.
//!
//! The file format is flat `key = value` lines with `#` comments. The same
//! dotted keys work as `--set key=value` overrides. The fully resolved
//! configuration is echoed into every output artifact.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use textgraph_core::config::{Backbone, Backend, ModelConfig, TrainConfig};
use textgraph_core::data::LabelSchema;
use textgraph_core::rng::fnv1a;

use crate::{Error, Result};

/// Version stamp embedded in every artifact this tool writes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { model: ModelConfig::default(), train: TrainConfig::default() }
    }
}

/// Every accepted key, its target, and a short description. One source of
/// truth for parsing, error messages, and the README schema table.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("encoder.backbone", "toy | adapter"),
    ("encoder.hidden_size", "model width D (even)"),
    ("encoder.toy_vocab_size", "hash-bucket count of the toy embedding table"),
    ("encoder.adapter_id", "identifier of the external embedding provider"),
    ("encoder.adapter_width", "provider embedding width before projection (0 = D)"),
    ("encoder.max_positions", "sentence token cap; longer inputs are rejected"),
    ("data.max_span_width", "maximum candidate span width"),
    ("graph.k_nodes", "top-K nodes (0 = sequence length)"),
    ("graph.k_edges", "top-K edges (0 = sequence length)"),
    ("graph.force_gold", "union gold spans/pairs into training selections"),
    ("gt.backend", "transformer | gcn | gat | sage"),
    ("gt.layers", "refinement layers"),
    ("gt.heads", "attention heads (transformer backend)"),
    ("gt.edge_features", "add projected span features to edge tokens"),
    ("gt.freeze_identifiers", "do not train the identifier pool"),
    ("gt.pool_size", "identifier pool rows (0 = D/2)"),
    ("decode.flat", "greedy non-overlap decoding"),
    ("decode.threshold", "keep threshold (strictly greater)"),
    ("loss.strict_paper", "classification loss over kept elements only"),
    ("train.lr_backbone", "backbone learning rate"),
    ("train.lr_others", "learning rate for everything else"),
    ("train.weight_decay", "AdamW weight decay"),
    ("train.warmup_steps", "linear warmup steps"),
    ("train.total_steps", "total optimizer steps"),
    ("train.batch_size", "sentences per step"),
    ("train.seed", "run seed"),
    ("train.eval_every", "dev evaluation cadence in steps"),
    ("train.grad_clip", "global gradient-norm clip"),
    ("train.fnn_dropout", "dropout inside feed-forward blocks"),
];

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got `{v}`"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

impl RunConfig {
    /// Apply one dotted key. Unknown keys list the valid ones.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "encoder.backbone" => {
                self.model.encoder.backbone = match v {
                    "toy" => Backbone::Toy,
                    "adapter" => Backbone::Adapter,
                    _ => return Err(Error::Config(format!("encoder.backbone: `{v}`"))),
                }
            }
            "encoder.hidden_size" => self.model.encoder.hidden_size = parse_num(key, v)?,
            "encoder.toy_vocab_size" => self.model.encoder.toy_vocab_size = parse_num(key, v)?,
            "encoder.adapter_id" => self.model.encoder.adapter_id = v.to_string(),
            "encoder.adapter_width" => self.model.encoder.adapter_width = parse_num(key, v)?,
            "encoder.max_positions" => self.model.encoder.max_positions = parse_num(key, v)?,
            "data.max_span_width" => self.model.max_span_width = parse_num(key, v)?,
            "graph.k_nodes" => self.model.graph.k_nodes = parse_num(key, v)?,
            "graph.k_edges" => self.model.graph.k_edges = parse_num(key, v)?,
            "graph.force_gold" => self.model.graph.force_gold = parse_bool(key, v)?,
            "gt.backend" => self.model.gt.backend = Backend::parse(v)?,
            "gt.layers" => self.model.gt.layers = parse_num(key, v)?,
            "gt.heads" => self.model.gt.heads = parse_num(key, v)?,
            "gt.edge_features" => self.model.gt.edge_features = parse_bool(key, v)?,
            "gt.freeze_identifiers" => self.model.gt.freeze_identifiers = parse_bool(key, v)?,
            "gt.pool_size" => self.model.gt.pool_size = parse_num(key, v)?,
            "decode.flat" => self.model.decode.flat = parse_bool(key, v)?,
            "decode.threshold" => self.model.decode.threshold = parse_num(key, v)?,
            "loss.strict_paper" => self.model.loss.strict_paper = parse_bool(key, v)?,
            "train.lr_backbone" => self.train.lr_backbone = parse_num(key, v)?,
            "train.lr_others" => self.train.lr_others = parse_num(key, v)?,
            "train.weight_decay" => self.train.weight_decay = parse_num(key, v)?,
            "train.warmup_steps" => self.train.warmup_steps = parse_num(key, v)?,
            "train.total_steps" => self.train.total_steps = parse_num(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, v)?,
            "train.seed" => self.train.seed = parse_num(key, v)?,
            "train.eval_every" => self.train.eval_every = parse_num(key, v)?,
            "train.grad_clip" => self.train.grad_clip = parse_num(key, v)?,
            "train.fnn_dropout" => self.train.fnn_dropout = parse_num(key, v)?,
            _ => {
                let mut msg = format!("unknown config key `{key}`; valid keys:\n");
                for (k, desc) in CONFIG_KEYS {
                    let _ = writeln!(msg, "  {k:24} {desc}");
                }
                return Err(Error::Config(msg));
            }
        }
        Ok(())
    }

    /// Parse a flat key-value file over the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Apply repeated `key=value` override arguments.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Resolve defaults <- optional file <- overrides, then validate.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hash of the full resolved configuration.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a(canonical.as_bytes()))
    }
}

/// Fingerprint of everything that determines parameter shapes and meaning:
/// encoder and refinement architecture plus the label schema. Checkpoints
/// refuse to load under a different fingerprint unless forced.
pub fn arch_fingerprint(model: &ModelConfig, schema: &LabelSchema) -> String {
    let arch = serde_json::json!({
        "encoder": model.encoder,
        "gt": model.gt,
        "entity_types": schema.entity_types,
        "relation_types": schema.relation_types,
    });
    format!("{:016x}", fnv1a(arch.to_string().as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_defaults_file_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\ntrain.batch_size = 4\ngt.layers = 3\n").unwrap();
        let cfg = RunConfig::resolve(
            Some(&path),
            &["gt.layers=5".to_string(), "train.seed=9".to_string()],
        )
        .unwrap();
        assert_eq!(cfg.train.batch_size, 4); // from file
        assert_eq!(cfg.model.gt.layers, 5); // flag beats file
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.train.total_steps, 50_000); // default
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let mut cfg = RunConfig::default();
        let err = cfg.set("gt.depth", "3").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gt.layers"));
        assert!(msg.contains("train.batch_size"));
    }

    #[test]
    fn hash_changes_with_values() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.set("gt.layers", "7").unwrap();
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash(), RunConfig::default().config_hash());
    }

    #[test]
    fn every_documented_key_is_settable() {
        let mut cfg = RunConfig::default();
        for (key, _) in CONFIG_KEYS {
            let value = match *key {
                "encoder.backbone" => "toy",
                "gt.backend" => "sage",
                "encoder.adapter_id" => "provider-x",
                k if k.ends_with("flat")
                    || k.contains("force_gold")
                    || k.contains("edge_features")
                    || k.contains("freeze_identifiers")
                    || k.contains("strict_paper") =>
                {
                    "true"
                }
                k if k.contains("lr") || k.contains("decay") || k.contains("dropout") => "0.25",
                "decode.threshold" => "0.5",
                "train.grad_clip" => "1.5",
                _ => "6",
            };
            cfg.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
