//! Model and training configuration.
//!
//! Defaults mirror the published benchmark setup (hidden size 768, two
//! refinement layers, span width 12, AdamW with warmup, batch size 8,
//! top-K equal to the sequence length).

use alloc::string::String;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Backbone {
    Toy,
    Adapter,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EncoderConfig {
    pub backbone: Backbone,
    /// Model width D. Must be even: node identifiers live in D/2.
    pub hidden_size: usize,
    pub toy_vocab_size: usize,
    /// Opaque identifier for an externally supplied embedding provider.
    pub adapter_id: String,
    /// Width of the adapter provider's embeddings before projection to D.
    pub adapter_width: usize,
    /// Hard cap on tokens per sentence; longer inputs are rejected.
    pub max_positions: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Toy,
            hidden_size: 768,
            toy_vocab_size: 4096,
            adapter_id: String::new(),
            adapter_width: 0,
            max_positions: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphConfig {
    /// 0 means "sequence length", the published default.
    pub k_nodes: usize,
    /// 0 means "sequence length".
    pub k_edges: usize,
    /// Union gold spans/pairs into the selection during training.
    /// Off by default; the reference training recipe never forces gold.
    pub force_gold: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { k_nodes: 0, k_edges: 0, force_gold: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Backend {
    Transformer,
    Gcn,
    Gat,
    Sage,
}

impl Backend {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "transformer" | "trans" => Ok(Backend::Transformer),
            "gcn" => Ok(Backend::Gcn),
            "gat" => Ok(Backend::Gat),
            "sage" => Ok(Backend::Sage),
            other => Err(Error::Config(alloc::format!(
                "unknown backend `{other}` (expected transformer|gcn|gat|sage)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Transformer => "transformer",
            Backend::Gcn => "gcn",
            Backend::Gat => "gat",
            Backend::Sage => "sage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GtConfig {
    pub backend: Backend,
    pub layers: usize,
    pub heads: usize,
    /// Add a learned projection of endpoint span features into edge tokens.
    pub edge_features: bool,
    pub freeze_identifiers: bool,
    /// 0 means "auto": D/2, the largest size that can stay orthonormal.
    pub pool_size: usize,
}

impl Default for GtConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Transformer,
            layers: 2,
            heads: 8,
            edge_features: false,
            freeze_identifiers: false,
            pool_size: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecodeConfig {
    /// Enforce non-overlapping spans via greedy selection.
    pub flat: bool,
    /// Keep threshold; strictly-greater semantics.
    pub threshold: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { flat: true, threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossConfig {
    /// Restrict the classification loss to the kept nodes/edges only.
    /// Default is off: classifying every selected node/edge keeps the
    /// classifier supplied with gradient even when the edit layer keeps
    /// nothing early in training.
    pub strict_paper: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { strict_paper: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub lr_backbone: f64,
    pub lr_others: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Dev evaluation cadence in steps.
    pub eval_every: usize,
    pub grad_clip: f64,
    /// Dropout inside the two-layer feed-forward blocks.
    pub fnn_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_backbone: 3e-5,
            lr_others: 5e-5,
            weight_decay: 1e-4,
            warmup_steps: 5000,
            total_steps: 50_000,
            batch_size: 8,
            seed: 0,
            eval_every: 500,
            grad_clip: 1.0,
            fnn_dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub graph: GraphConfig,
    pub gt: GtConfig,
    pub decode: DecodeConfig,
    pub loss: LossConfig,
    pub max_span_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            graph: GraphConfig::default(),
            gt: GtConfig::default(),
            decode: DecodeConfig::default(),
            loss: LossConfig::default(),
            max_span_width: DEFAULT_MAX_SPAN_WIDTH,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.encoder.hidden_size;
        if d == 0 || d % 2 != 0 {
            return Err(Error::Config(alloc::format!(
                "encoder.hidden_size must be positive and even, got {d}"
            )));
        }
        if self.encoder.backbone == Backbone::Toy && self.encoder.toy_vocab_size == 0 {
            return Err(Error::Config("encoder.toy_vocab_size must be positive".into()));
        }
        if self.encoder.max_positions == 0 {
            return Err(Error::Config("encoder.max_positions must be positive".into()));
        }
        if self.max_span_width == 0 {
            return Err(Error::Config("max_span_width must be >= 1".into()));
        }
        if self.gt.layers == 0 {
            return Err(Error::Config("gt.layers must be >= 1".into()));
        }
        if self.gt.backend == Backend::Transformer {
            if self.gt.heads == 0 || d % self.gt.heads != 0 {
                return Err(Error::Config(alloc::format!(
                    "gt.heads must divide hidden_size ({d}), got {}",
                    self.gt.heads
                )));
            }
        }
        let pool = self.pool_size();
        if pool == 0 || pool > d / 2 {
            return Err(Error::Config(alloc::format!(
                "gt.pool_size must be in 1..={} (identifiers are orthonormal in D/2), got {pool}",
                d / 2
            )));
        }
        if !(self.decode.threshold >= 0.0 && self.decode.threshold < 1.0) {
            return Err(Error::Config("decode.threshold must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Resolved identifier pool size (`gt.pool_size`, or D/2 when auto).
    pub fn pool_size(&self) -> usize {
        if self.gt.pool_size == 0 {
            self.encoder.hidden_size / 2
        } else {
            self.gt.pool_size
        }
    }

    /// Resolved top-K for nodes given a sentence length.
    pub fn k_nodes(&self, seq_len: usize) -> usize {
        if self.graph.k_nodes == 0 {
            seq_len
        } else {
            self.graph.k_nodes
        }
    }

    /// Resolved top-K for edges given a sentence length.
    pub fn k_edges(&self, seq_len: usize) -> usize {
        if self.graph.k_edges == 0 {
            seq_len
        } else {
            self.graph.k_edges
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_backbone <= 0.0 || self.lr_others <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(alloc::format!(
                "warmup_steps ({}) must not exceed total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.fnn_dropout >= 0.0 && self.fnn_dropout < 1.0) {
            return Err(Error::Config("fnn_dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Default maximum span width, matching the published setup.
pub const DEFAULT_MAX_SPAN_WIDTH: usize = 12;
