//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "NSMODEL\0"
//! version      u32
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON (config, layer summary, parameter table)
//! value_count  u64
//! values       value_count f64
//! ```
//!
//! Values are always stored as f64, whatever the in-memory precision.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSummary, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Real;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NSMODEL\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    layers: Vec<LayerSummary>,
    parameters: Vec<ParamEntry>,
}

impl Model {
    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::new();
        let mut offset = 0;
        for p in self.parameters() {
            entries.push(ParamEntry {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                offset,
                len: p.numel(),
            });
            offset += p.numel();
        }
        let header = Header {
            config: self.config.clone(),
            layers: self.summary().layers,
            parameters: entries,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(32 + json.len() + offset * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(offset as u64).to_le_bytes());
        for p in self.parameters() {
            for &v in p.tensor.data() {
                out.extend_from_slice(&(v as f64).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Model> {
        Self::read_checkpoint(bytes, Path::new("<memory>"))
    }

    fn read_checkpoint(mut bytes: &[u8], path: &Path) -> Result<Model> {
        let bad = |msg: &str| Error::data(path, format!("invalid checkpoint: {msg}"));
        let mut magic = [0u8; 8];
        bytes.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32b = [0u8; 4];
        bytes.read_exact(&mut u32b).map_err(|_| bad("truncated version"))?;
        let version = u32::from_le_bytes(u32b);
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut u64b = [0u8; 8];
        bytes.read_exact(&mut u64b).map_err(|_| bad("truncated header length"))?;
        let hlen = u64::from_le_bytes(u64b) as usize;
        if bytes.len() < hlen {
            return Err(bad("truncated header"));
        }
        let (json, rest) = bytes.split_at(hlen);
        let header: Header = serde_json::from_slice(json).map_err(|e| bad(&e.to_string()))?;
        bytes = rest;
        bytes.read_exact(&mut u64b).map_err(|_| bad("truncated value count"))?;
        let count = u64::from_le_bytes(u64b) as usize;
        if bytes.len() != count * 8 {
            return Err(bad(&format!(
                "expected {} value bytes, found {}",
                count * 8,
                bytes.len()
            )));
        }

        let mut model = Model::build(header.config)?;
        if model.summary().layers != header.layers {
            return Err(bad("layer table does not match the configured architecture"));
        }
        let params = model.parameters_mut();
        if params.len() != header.parameters.len() {
            return Err(bad("parameter count mismatch"));
        }
        for (p, entry) in params.into_iter().zip(&header.parameters) {
            if p.name != entry.name || p.tensor.shape() != entry.shape.as_slice() || entry.len != p.numel() {
                return Err(bad(&format!("parameter `{}` does not match", entry.name)));
            }
            if entry.offset + entry.len > count {
                return Err(bad(&format!("parameter `{}` is out of range", entry.name)));
            }
            let src = &bytes[entry.offset * 8..(entry.offset + entry.len) * 8];
            for (dst, chunk) in p.tensor.data_mut().iter_mut().zip(src.chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")) as Real;
            }
        }
        Ok(model)
    }
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let bytes = model.to_checkpoint_bytes()?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Model::read_checkpoint(&bytes, path)
}
