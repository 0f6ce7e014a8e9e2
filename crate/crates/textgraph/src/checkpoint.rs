//! Checkpoints: one JSON metadata header line, then little-endian f64
//! parameter records keyed by module path.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use textgraph_core::data::LabelSchema;
use textgraph_core::matrix::Matrix;
use textgraph_core::metrics::MetricReport;
use textgraph_core::model::Model;

use crate::runconfig::{arch_fingerprint, RunConfig, FORMAT_VERSION};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: RunConfig,
    pub config_hash: String,
    pub arch_fingerprint: String,
    pub schema: LabelSchema,
    pub step: usize,
    pub dev_metrics: Option<MetricReport>,
}

pub fn save(path: &Path, model: &Model, config: &RunConfig, step: usize, dev: Option<&MetricReport>) -> Result<()> {
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        config_hash: config.config_hash(),
        arch_fingerprint: arch_fingerprint(&config.model, model.schema()),
        schema: model.schema().clone(),
        step,
        dev_metrics: dev.copied(),
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = serde_json::to_string(&meta).expect("metadata serializes");
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for (name, param) in model.store().iter() {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(|e| Error::io(path, e))?;
        w.write_all(bytes).map_err(|e| Error::io(path, e))?;
        w.write_all(&(param.value.rows() as u32).to_le_bytes()).map_err(|e| Error::io(path, e))?;
        w.write_all(&(param.value.cols() as u32).to_le_bytes()).map_err(|e| Error::io(path, e))?;
        for &v in param.value.data() {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub struct Loaded {
    pub meta: CheckpointMeta,
    pub model: Model,
}

/// Load a checkpoint and rebuild the model. Unless `force` is set, the
/// architecture fingerprint must match what the stored config and schema
/// produce today (guards against loading weights into a reshaped model).
pub fn load(path: &Path, force: bool) -> Result<Loaded> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = String::new();
    {
        // Read up to the first newline byte by byte; the rest is binary.
        let mut byte = [0u8; 1];
        loop {
            let n = r.read(&mut byte).map_err(|e| Error::io(path, e))?;
            if n == 0 || byte[0] == b'\n' {
                break;
            }
            header.push(byte[0] as char);
        }
    }
    let meta: CheckpointMeta = serde_json::from_str(&header).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::CheckpointMismatch(format!(
            "format version {} (this build reads {FORMAT_VERSION})",
            meta.format_version
        )));
    }
    let expected = arch_fingerprint(&meta.config.model, &meta.schema);
    if meta.arch_fingerprint != expected && !force {
        return Err(Error::CheckpointMismatch(format!(
            "architecture fingerprint {} does not match the stored config ({expected})",
            meta.arch_fingerprint
        )));
    }

    let mut model =
        Model::new(meta.config.model.clone(), meta.schema.clone(), meta.config.train.seed)
            .map_err(Error::Core)?;
    let mut seen = std::collections::BTreeSet::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::io(path, e)),
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf).map_err(|e| Error::io(path, e))?;
        let name = String::from_utf8(name_buf)
            .map_err(|e| Error::Other(format!("bad parameter name in checkpoint: {e}")))?;
        let mut dim = [0u8; 4];
        r.read_exact(&mut dim).map_err(|e| Error::io(path, e))?;
        let rows = u32::from_le_bytes(dim) as usize;
        r.read_exact(&mut dim).map_err(|e| Error::io(path, e))?;
        let cols = u32::from_le_bytes(dim) as usize;
        let mut data = vec![0.0f64; rows * cols];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            *v = f64::from_le_bytes(buf);
        }
        if !model.store().contains(&name) {
            return Err(Error::CheckpointMismatch(format!("unexpected parameter `{name}`")));
        }
        let param = model.store_mut().get_mut(&name);
        if param.value.shape() != (rows, cols) {
            return Err(Error::CheckpointMismatch(format!(
                "parameter `{name}` has shape {rows}x{cols}, expected {}x{}",
                param.value.rows(),
                param.value.cols()
            )));
        }
        param.value = Matrix::new(rows, cols, data);
        seen.insert(name);
    }
    let expected_names = model.store().names();
    for name in &expected_names {
        if !seen.contains(name) {
            return Err(Error::CheckpointMismatch(format!("missing parameter `{name}`")));
        }
    }
    Ok(Loaded { meta, model })
}
