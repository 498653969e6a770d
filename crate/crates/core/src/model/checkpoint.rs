//! Binary checkpoint format:
//!
//! ```text
//! b"MSDNNCK1"
//! u64 LE   header length
//! [u8]     UTF-8 JSON header {format_version, config, fc_nodes, params: [{path, shape}]}
//! f64 LE * every parameter, in header order
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{param_specs, MsdnnModel, NetworkConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSDNNCK1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: NetworkConfig,
    fc_nodes: usize,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    path: String,
    shape: Vec<usize>,
}

fn ck_err(layer: Option<&str>, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        layer: layer.map(str::to_owned),
        message: message.into(),
    }
}

pub fn write_checkpoint<S: Scalar>(model: &MsdnnModel<S>) -> Result<Vec<u8>> {
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        config: model.config().clone(),
        fc_nodes: model.config().fc_nodes,
        params: model
            .params()
            .iter()
            .map(|(path, p)| ParamEntry {
                path: path.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ck_err(None, e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * model.num_parameters());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params().values() {
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_real().to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<MsdnnModel<f64>> {
    if bytes.len() < 16 {
        return Err(ck_err(None, "file too short for magic and header length"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(ck_err(None, "bad magic bytes (not an MSDNN checkpoint)"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < header_len {
        return Err(ck_err(None, format!("truncated header: {header_len} bytes declared, {} present", body.len())));
    }
    let header: Header =
        serde_json::from_slice(&body[..header_len]).map_err(|e| ck_err(None, format!("malformed header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(ck_err(
            None,
            format!("unsupported format version {} (expected {CHECKPOINT_VERSION})", header.format_version),
        ));
    }
    header.config.validate()?;
    if header.fc_nodes != header.config.fc_nodes {
        return Err(ck_err(Some("encoder.fc.weight"), "header fc_nodes disagrees with config"));
    }

    let specs = param_specs(&header.config);
    if specs.len() != header.params.len() {
        let missing = specs
            .iter()
            .find(|s| !header.params.iter().any(|p| p.path == s.path))
            .map(|s| s.path.clone());
        return Err(ck_err(
            missing.as_deref(),
            format!("config implies {} parameters, header lists {}", specs.len(), header.params.len()),
        ));
    }

    let mut data = &body[header_len..];
    let mut values = Vec::with_capacity(specs.len());
    for (spec, entry) in specs.iter().zip(&header.params) {
        if spec.path != entry.path {
            return Err(ck_err(Some(&entry.path), format!("expected layer `{}` at this position", spec.path)));
        }
        if spec.shape != entry.shape {
            return Err(ck_err(
                Some(&entry.path),
                format!("shape {:?} does not match config-derived {:?}", entry.shape, spec.shape),
            ));
        }
        let count: usize = entry.shape.iter().product();
        let need = count * 8;
        if data.len() < need {
            return Err(ck_err(Some(&entry.path), format!("truncated: needs {need} bytes, {} left", data.len())));
        }
        let vals = data[..need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        data = &data[need..];
        values.push((entry.path.clone(), Tensor::from_vec(&entry.shape, vals)?));
    }
    if !data.is_empty() {
        return Err(ck_err(None, format!("{} trailing bytes after last parameter", data.len())));
    }
    MsdnnModel::from_parts(header.config, values)
}

pub fn save<S: Scalar>(model: &MsdnnModel<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_checkpoint(model)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<MsdnnModel<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
