//! Command-line entry points: train, eval, predict, ablate, convert,
//! inspect-attention, and make-synthetic.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use textgraph_core::config::Backend;
use textgraph_core::data::{LabelSchema, Sentence};
use textgraph_core::metrics::{confusion_report, MetricReport};
use textgraph_core::model::Model;
use textgraph_core::synth::SynthSpec;

use crate::runconfig::{RunConfig, FORMAT_VERSION};
use crate::{checkpoint, corpus, report, trainer, Error, Result};

#[derive(Parser)]
#[command(
    name = "textgraph",
    about = "Joint entity and relation extraction as graph structure learning",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args)]
pub struct ConfigArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted config overrides, e.g. --set gt.layers=3 (repeatable).
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Shorthand for --set train.seed=N.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shorthand for --set train.total_steps=N.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Shorthand for --set train.warmup_steps=N.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Shorthand for --set gt.backend=B.
    #[arg(long = "gt.backend", value_name = "BACKEND")]
    pub gt_backend: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("train.seed={seed}"));
        }
        if let Some(steps) = self.steps {
            overrides.push(format!("train.total_steps={steps}"));
        }
        if let Some(warmup) = self.warmup {
            overrides.push(format!("train.warmup_steps={warmup}"));
        }
        if let Some(backend) = &self.gt_backend {
            overrides.push(format!("gt.backend={backend}"));
        }
        RunConfig::resolve(self.config.as_deref(), &overrides)
    }
}

#[derive(Args)]
pub struct DataArgs {
    /// Directory holding train.jsonl / dev.jsonl / test.jsonl.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Explicit training corpus (overrides --data).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Explicit dev corpus (overrides --data).
    #[arg(long)]
    pub dev: Option<PathBuf>,
}

impl DataArgs {
    fn load_train(&self) -> Result<Vec<Sentence>> {
        match (&self.train, &self.data) {
            (Some(path), _) => corpus::load_jsonl(path),
            (None, Some(dir)) => corpus::load_split(dir, corpus::Split::Train),
            (None, None) => Err(Error::Config("pass --data DIR or --train FILE".into())),
        }
    }

    fn load_dev(&self) -> Result<Option<Vec<Sentence>>> {
        if let Some(path) = &self.dev {
            return Ok(Some(corpus::load_jsonl(path)?));
        }
        if let Some(dir) = &self.data {
            let path = dir.join(corpus::Split::Dev.file_name());
            if path.exists() {
                return Ok(Some(corpus::load_jsonl(&path)?));
            }
        }
        Ok(None)
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a model and retain the best checkpoint by dev REL+ F1.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for checkpoints, logs, and reports.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Score a checkpoint on a corpus (ENT / REL / REL+ micro-F1).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corpus file to score.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write confusion matrices (CSV + rendered figures).
        #[arg(long)]
        confusion: bool,
        /// Load despite an architecture fingerprint mismatch.
        #[arg(long)]
        force: bool,
    },
    /// Predict the IE graph for a corpus file or one tokenized sentence.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON-lines input (gold fields optional).
        #[arg(long)]
        input: Option<PathBuf>,
        /// One pre-tokenized sentence (whitespace separated).
        #[arg(long)]
        tokens: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also dump the initial candidate graphs as JSON lines.
        #[arg(long)]
        dump_graph: bool,
        #[arg(long)]
        force: bool,
    },
    /// Train all four backends on one budget and tabulate ENT/REL/REL+.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Convert the nested {"sentences": ...} document format to the flat
    /// JSON-lines corpus format.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write per-layer attention maps for one sentence.
    InspectAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        /// One pre-tokenized sentence (whitespace separated).
        #[arg(long)]
        tokens: Option<String>,
        /// Or: JSON-lines input file plus --index.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Top-n nodes and top-n edges by keep probability.
        #[arg(long, default_value_t = 3)]
        top: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic corpus with compositional relation types.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        sentences: usize,
        #[arg(long, default_value_t = 50)]
        vocab: usize,
        #[arg(long = "entity-types", default_value_t = 2)]
        entity_types: usize,
        #[arg(long = "relation-types", default_value_t = 2)]
        relation_types: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "min-len", default_value_t = 8)]
        min_len: usize,
        #[arg(long = "max-len", default_value_t = 14)]
        max_len: usize,
        #[arg(long = "max-entities", default_value_t = 3)]
        max_entities: usize,
    },
}

fn load_checkpoint(path: &Path, force: bool) -> Result<(checkpoint::CheckpointMeta, Model)> {
    let loaded = checkpoint::load(path, force)?;
    Ok((loaded.meta, loaded.model))
}

fn tokens_sentence(tokens: &str) -> Result<Sentence> {
    let toks: Vec<String> = tokens.split_whitespace().map(|t| t.to_string()).collect();
    Sentence::new(toks, vec![], vec![], Some("cli-input".into())).map_err(Error::Core)
}

#[derive(Serialize)]
struct PredictionRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    tokens: Vec<String>,
    entities: Vec<(usize, usize, String)>,
    relations: Vec<(usize, usize, String)>,
}

#[derive(Serialize)]
struct PredictionsDoc<'a> {
    format_version: u32,
    config: &'a RunConfig,
    predictions: Vec<PredictionRecord>,
}

fn eval_with_labels(
    model: &Model,
    schema: &LabelSchema,
    corpus_data: &[Sentence],
) -> Result<MetricReport> {
    corpus::validate_labels(corpus_data, schema)?;
    trainer::evaluate(model, corpus_data)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { data, config, out } => {
            let run_config = config.resolve()?;
            let train_corpus = data.load_train()?;
            let dev_corpus = data.load_dev()?;
            let outcome = trainer::train(
                &run_config,
                &train_corpus,
                dev_corpus.as_deref(),
                &out,
                |msg| println!("{msg}"),
            )?;
            if let Some(report) = &outcome.best_dev {
                let report_path = out.join("dev_report.json");
                report::write_metric_report(&report_path, report, &run_config)?;
                println!(
                    "best dev checkpoint at step {} (REL+ F1 {:.4}): {}",
                    outcome.best_step.unwrap_or(0),
                    report.rel_plus.f1,
                    outcome.best_path.as_ref().unwrap_or(&outcome.last_path).display()
                );
                print!("{}", report::render_table(report));
            }
            println!("final checkpoint: {}", outcome.last_path.display());
            Ok(())
        }
        Command::Eval { checkpoint, data, out, confusion, force } => {
            let (meta, model) = load_checkpoint(&checkpoint, force)?;
            let corpus_data = corpus::load_jsonl(&data)?;
            let metrics = eval_with_labels(&model, model.schema(), &corpus_data)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let report_path = out.join("report.json");
            report::write_metric_report(&report_path, &metrics, &meta.config)?;
            print!("{}", report::render_table(&metrics));
            println!("report: {}", report_path.display());
            if confusion {
                let mut preds = Vec::with_capacity(corpus_data.len());
                for s in &corpus_data {
                    preds.push(model.predict(s).map_err(Error::Core)?.ie);
                }
                let matrices = confusion_report(
                    preds.iter().zip(corpus_data.iter()).map(|(p, g)| (p, g)),
                    model.schema(),
                )
                .map_err(Error::Core)?;
                for path in report::write_confusion(&out, &matrices)? {
                    println!("confusion artifact: {}", path.display());
                }
            }
            Ok(())
        }
        Command::Predict { checkpoint, input, tokens, out, dump_graph, force } => {
            let (meta, model) = load_checkpoint(&checkpoint, force)?;
            let sentences = match (&input, &tokens) {
                (Some(path), None) => corpus::load_jsonl(path)?,
                (None, Some(text)) => vec![tokens_sentence(text)?],
                _ => return Err(Error::Config("pass exactly one of --input or --tokens".into())),
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let mut records = Vec::with_capacity(sentences.len());
            let mut graphs = Vec::new();
            for s in &sentences {
                let pred = model.predict(s).map_err(Error::Core)?;
                records.push(PredictionRecord {
                    id: s.id.clone(),
                    tokens: s.tokens.clone(),
                    entities: pred
                        .ie
                        .entities
                        .iter()
                        .map(|e| (e.span.start, e.span.end, e.label.clone()))
                        .collect(),
                    relations: pred
                        .ie
                        .relations
                        .iter()
                        .map(|r| (r.head, r.tail, r.label.clone()))
                        .collect(),
                });
                if dump_graph {
                    graphs.push(serde_json::json!({
                        "id": s.id,
                        "nodes": pred.initial.nodes,
                        "edges": pred.initial.edges,
                    }));
                }
            }
            let doc = PredictionsDoc {
                format_version: FORMAT_VERSION,
                config: &meta.config,
                predictions: records,
            };
            let path = out.join("predictions.json");
            let json = serde_json::to_string_pretty(&doc).expect("predictions serialize");
            std::fs::write(&path, format!("{json}\n")).map_err(|e| Error::io(&path, e))?;
            println!("predictions: {}", path.display());
            if dump_graph {
                let graph_path = out.join("initial_graphs.jsonl");
                let mut text = String::new();
                for g in graphs {
                    let _ = writeln!(text, "{g}");
                }
                std::fs::write(&graph_path, text).map_err(|e| Error::io(&graph_path, e))?;
                println!("initial graphs: {}", graph_path.display());
            }
            Ok(())
        }
        Command::Ablate { data, config, out } => {
            let run_config = config.resolve()?;
            let train_corpus = data.load_train()?;
            let dev_corpus = data
                .load_dev()?
                .ok_or_else(|| Error::Config("ablate needs a dev split for comparison".into()))?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let backends =
                [Backend::Transformer, Backend::Gcn, Backend::Gat, Backend::Sage];
            let mut rows = Vec::new();
            for backend in backends {
                let mut cfg = run_config.clone();
                cfg.model.gt.backend = backend;
                cfg.validate()?;
                let sub_out = out.join(backend.name());
                println!("== training backend {} ==", backend.name());
                let outcome =
                    trainer::train(&cfg, &train_corpus, Some(&dev_corpus), &sub_out, |msg| {
                        println!("[{}] {msg}", backend.name())
                    })?;
                let metrics = match outcome.best_dev {
                    Some(m) => m,
                    None => trainer::evaluate(&outcome.model, &dev_corpus)?,
                };
                rows.push((backend, metrics));
            }
            let mut table = String::new();
            let _ = writeln!(table, "{:<12} {:>8} {:>8} {:>8}", "backend", "ENT", "REL", "REL+");
            for (backend, m) in &rows {
                let _ = writeln!(
                    table,
                    "{:<12} {:>8.4} {:>8.4} {:>8.4}",
                    backend.name(),
                    m.ent.f1,
                    m.rel.f1,
                    m.rel_plus.f1
                );
            }
            print!("{table}");
            let doc = serde_json::json!({
                "format_version": FORMAT_VERSION,
                "config": run_config,
                "results": rows
                    .iter()
                    .map(|(b, m)| serde_json::json!({"backend": b.name(), "metrics": m}))
                    .collect::<Vec<_>>(),
            });
            let json_path = out.join("ablate.json");
            std::fs::write(&json_path, format!("{:#}\n", doc))
                .map_err(|e| Error::io(&json_path, e))?;
            let table_path = out.join("ablate.txt");
            std::fs::write(&table_path, table).map_err(|e| Error::io(&table_path, e))?;
            println!("ablation artifacts: {} and {}", json_path.display(), table_path.display());
            Ok(())
        }
        Command::Convert { input, output } => {
            let stats = corpus::convert_nested(&input, &output)?;
            println!(
                "converted {} documents / {} sentences ({} entities, {} relations, {} relations skipped) -> {}",
                stats.documents,
                stats.sentences,
                stats.entities,
                stats.relations,
                stats.skipped_relations,
                output.display()
            );
            Ok(())
        }
        Command::InspectAttention { checkpoint, tokens, input, index, top, out, force } => {
            let (meta, model) = load_checkpoint(&checkpoint, force)?;
            let sentence = match (&input, &tokens) {
                (Some(path), None) => {
                    let corpus_data = corpus::load_jsonl(path)?;
                    corpus_data.into_iter().nth(index).ok_or_else(|| {
                        Error::Config(format!("--index {index} is out of range"))
                    })?
                }
                (None, Some(text)) => tokens_sentence(text)?,
                _ => return Err(Error::Config("pass exactly one of --input or --tokens".into())),
            };
            let artifacts = report::emit_attention(&model, &sentence, &meta.config, top, &out)?;
            println!("attention json: {}", artifacts.json_path.display());
            for p in &artifacts.image_paths {
                println!("attention figure: {}", p.display());
            }
            Ok(())
        }
        Command::MakeSynthetic {
            out,
            sentences,
            vocab,
            entity_types,
            relation_types,
            seed,
            min_len,
            max_len,
            max_entities,
        } => {
            let spec = SynthSpec {
                sentences,
                vocab,
                entity_types,
                relation_types,
                min_len,
                max_len,
                max_entities,
                seed,
            };
            let corpus_data = textgraph_core::synth::generate(&spec).map_err(Error::Core)?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
            }
            corpus::save_jsonl(&out, &corpus_data)?;
            println!("wrote {} sentences to {}", corpus_data.len(), out.display());
            Ok(())
        }
    }
}
