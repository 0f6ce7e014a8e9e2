//! Evaluation artifacts: metric reports (JSON + text table), confusion
//! matrices (CSV + rendered figure), and attention maps (JSON + heatmap).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::Serialize;
use textgraph_core::data::Sentence;
use textgraph_core::matrix::Matrix;
use textgraph_core::metrics::{ConfusionMatrix, ConfusionReport, MetricReport, MetricSummary};
use textgraph_core::model::{ForwardOptions, Model};
use textgraph_core::rng::SeededRng;

use crate::runconfig::{RunConfig, FORMAT_VERSION};
use crate::{Error, Result};

#[derive(Serialize)]
struct ReportDoc<'a> {
    format_version: u32,
    config: &'a RunConfig,
    report: &'a MetricReport,
}

/// Serialize the metric report with the resolved config. Byte-stable for
/// identical inputs: no timestamps, fixed field order.
pub fn write_metric_report(path: &Path, report: &MetricReport, config: &RunConfig) -> Result<()> {
    let doc = ReportDoc { format_version: FORMAT_VERSION, config, report };
    let json = serde_json::to_string_pretty(&doc).expect("report serializes");
    std::fs::write(path, format!("{json}\n")).map_err(|e| Error::io(path, e))
}

fn summary_row(name: &str, s: &MetricSummary) -> String {
    let flag = if s.empty_convention { " (empty)" } else { "" };
    format!(
        "{name:<6} P {:>7.4}  R {:>7.4}  F1 {:>7.4}  TP {:>5}  FP {:>5}  FN {:>5}{flag}",
        s.precision, s.recall, s.f1, s.tp, s.fp, s.fn_
    )
}

pub fn render_table(report: &MetricReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "micro-averaged over {} sentences", report.sentences);
    let _ = writeln!(out, "{}", summary_row("ENT", &report.ent));
    let _ = writeln!(out, "{}", summary_row("REL", &report.rel));
    let _ = writeln!(out, "{}", summary_row("REL+", &report.rel_plus));
    out
}

fn confusion_csv(path: &Path, m: &ConfusionMatrix) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["gold\\pred".to_string()];
    header.extend(m.classes.iter().cloned());
    header.push("miss".to_string());
    w.write_record(&header).map_err(|e| Error::Other(e.to_string()))?;
    for (i, row) in m.counts.iter().enumerate() {
        let name = if i < m.classes.len() { m.classes[i].clone() } else { "spurious".to_string() };
        let mut record = vec![name];
        record.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&record).map_err(|e| Error::Other(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Three-stop color ramp (dark blue -> teal -> yellow) over [0, 1].
fn ramp(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64, t: f64| (a + (b - a) * t) as u8;
    if t < 0.5 {
        let u = t * 2.0;
        Rgb([lerp(13.0, 33.0, u), lerp(8.0, 145.0, u), lerp(135.0, 140.0, u)])
    } else {
        let u = (t - 0.5) * 2.0;
        Rgb([lerp(33.0, 253.0, u), lerp(145.0, 231.0, u), lerp(140.0, 37.0, u)])
    }
}

/// Render a matrix as a cell heatmap normalized by its max value.
pub fn heatmap_png(path: &Path, values: &Matrix, cell: u32) -> Result<()> {
    let rows = values.rows().max(1) as u32;
    let cols = values.cols().max(1) as u32;
    let max = values.data().iter().fold(0.0f64, |a, &b| a.max(b)).max(1e-12);
    let mut img = RgbImage::new(cols * cell, rows * cell);
    for r in 0..values.rows() {
        for c in 0..values.cols() {
            let color = ramp(values.get(r, c) / max);
            for dy in 0..cell {
                for dx in 0..cell {
                    img.put_pixel(c as u32 * cell + dx, r as u32 * cell + dy, color);
                }
            }
        }
    }
    img.save(path).map_err(|e| Error::Other(format!("writing {}: {e}", path.display())))
}

fn confusion_figure(path: &Path, m: &ConfusionMatrix) -> Result<()> {
    let n = m.counts.len();
    let mut values = Matrix::zeros(n, n);
    for (r, row) in m.counts.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            values.set(r, c, v as f64);
        }
    }
    heatmap_png(path, &values, 24)
}

/// Write entity/relation confusion matrices as CSV plus rendered figures.
/// Returns the file paths written.
pub fn write_confusion(out_dir: &Path, report: &ConfusionReport) -> Result<Vec<PathBuf>> {
    let files = [
        (out_dir.join("entity_confusion.csv"), ArtifactKind::Csv(&report.entity)),
        (out_dir.join("entity_confusion.png"), ArtifactKind::Png(&report.entity)),
        (out_dir.join("relation_confusion.csv"), ArtifactKind::Csv(&report.relation)),
        (out_dir.join("relation_confusion.png"), ArtifactKind::Png(&report.relation)),
    ];
    let mut written = Vec::new();
    for (path, kind) in files {
        match kind {
            ArtifactKind::Csv(m) => confusion_csv(&path, m)?,
            ArtifactKind::Png(m) => confusion_figure(&path, m)?,
        }
        written.push(path);
    }
    Ok(written)
}

enum ArtifactKind<'a> {
    Csv(&'a ConfusionMatrix),
    Png(&'a ConfusionMatrix),
}

// ---------------------------------------------------------------------
// Attention artifacts
// ---------------------------------------------------------------------

#[derive(Serialize)]
pub struct AttentionDoc {
    pub format_version: u32,
    pub config: RunConfig,
    /// Token labels in row/column order: "[k] text" for nodes,
    /// "[k]->[j]" for edges, with k the assigned identifier index.
    pub labels: Vec<String>,
    pub layers: Vec<AttentionLayerDoc>,
}

#[derive(Serialize)]
pub struct AttentionLayerDoc {
    pub layer: usize,
    /// One (selected x selected) matrix per head, rows renormalized over
    /// the selected token subset.
    pub heads: Vec<Vec<Vec<f64>>>,
}

pub struct AttentionArtifacts {
    pub json_path: PathBuf,
    pub image_paths: Vec<PathBuf>,
    pub labels: Vec<String>,
}

/// Run one sentence with attention capture, keep the `top_n` nodes and
/// `top_n` edges by keep probability, and write the restricted per-layer
/// attention maps plus a heatmap per layer (head-averaged).
pub fn emit_attention(
    model: &Model,
    sentence: &Sentence,
    config: &RunConfig,
    top_n: usize,
    out_dir: &Path,
) -> Result<AttentionArtifacts> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = SeededRng::new(0);
    let opts = ForwardOptions { capture_attention: true, ..ForwardOptions::default() };
    let pass = model.forward(sentence, &opts, &mut rng).map_err(Error::Core)?;
    let layers = pass.attention.as_ref().expect("transformer backend captures attention");

    // Top-n nodes and edges by keep probability; token order preserved.
    let node_keep = pass.node_keep_probs();
    let edge_keep = pass.edge_keep_probs();
    let mut node_rank = textgraph_core::graph::select_top_k(&node_keep, top_n);
    let mut edge_rank = textgraph_core::graph::select_top_k(&edge_keep, top_n);
    node_rank.sort_unstable();
    edge_rank.sort_unstable();

    let num_nodes = pass.graph.num_nodes();
    let mut token_idx: Vec<usize> = node_rank.clone();
    token_idx.extend(edge_rank.iter().map(|&e| num_nodes + e));

    let node_spans = pass.node_spans();
    let mut labels = Vec::with_capacity(token_idx.len());
    for &n in &node_rank {
        let span = node_spans[n];
        let text = sentence.tokens[span.start..=span.end].join(" ");
        labels.push(format!("[{}] {text}", pass.plan.assignment[n]));
    }
    for &e in &edge_rank {
        let edge = &pass.graph.edges[e];
        labels.push(format!(
            "[{}]->[{}]",
            pass.plan.assignment[edge.source], pass.plan.assignment[edge.target]
        ));
    }

    let restrict = |m: &Matrix| -> Matrix {
        let mut out = Matrix::zeros(token_idx.len(), token_idx.len());
        for (r, &tr) in token_idx.iter().enumerate() {
            // Renormalize each row over the kept columns so rows still sum
            // to one in the display.
            let total: f64 = token_idx.iter().map(|&tc| m.get(tr, tc)).sum();
            for (c, &tc) in token_idx.iter().enumerate() {
                let v = if total > 0.0 { m.get(tr, tc) / total } else { 0.0 };
                out.set(r, c, v);
            }
        }
        out
    };

    let mut doc_layers = Vec::new();
    let mut image_paths = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let heads: Vec<Matrix> = layer.heads.iter().map(&restrict).collect();
        let mut mean = Matrix::zeros(token_idx.len(), token_idx.len());
        for h in &heads {
            mean.add_assign(h);
        }
        let mean = mean.scale(1.0 / heads.len().max(1) as f64);
        let img_path = out_dir.join(format!("attention_layer{l}.png"));
        heatmap_png(&img_path, &mean, 32)?;
        image_paths.push(img_path);
        doc_layers.push(AttentionLayerDoc {
            layer: l,
            heads: heads
                .iter()
                .map(|h| {
                    (0..h.rows()).map(|r| h.row(r).to_vec()).collect::<Vec<Vec<f64>>>()
                })
                .collect(),
        });
    }

    let doc = AttentionDoc {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        labels: labels.clone(),
        layers: doc_layers,
    };
    let json_path = out_dir.join("attention.json");
    let json = serde_json::to_string_pretty(&doc).expect("attention doc serializes");
    std::fs::write(&json_path, format!("{json}\n")).map_err(|e| Error::io(&json_path, e))?;
    Ok(AttentionArtifacts { json_path, image_paths, labels })
}
