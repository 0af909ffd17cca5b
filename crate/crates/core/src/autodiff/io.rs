//! Weight interchange: `header.json` lists each named tensor with its shape
//! and byte offset, `weights.bin` holds the little-endian `f64` payloads
//! concatenated in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const HEADER_FILE: &str = "header.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `weights.bin`.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightHeader {
    pub dtype: String,
    pub tensors: Vec<HeaderEntry>,
}

pub fn save_weights(dir: &Path, tensors: &[(String, &Tensor)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        entries.push(HeaderEntry { name: name.clone(), shape: t.shape().to_vec(), offset: bytes.len() });
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = WeightHeader { dtype: "f64-le".into(), tensors: entries };
    let header_path = dir.join(HEADER_FILE);
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::json(&header_path, e))?;
    fs::write(&header_path, json).map_err(|e| Error::io(&header_path, e))?;
    let bin_path = dir.join(WEIGHTS_FILE);
    fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))
}

pub fn load_weights(dir: &Path) -> Result<Vec<(String, Tensor)>> {
    let header_path = dir.join(HEADER_FILE);
    let raw = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: WeightHeader = serde_json::from_str(&raw).map_err(|e| Error::json(&header_path, e))?;
    if header.dtype != "f64-le" {
        return Err(Error::Format { path: header_path, line: 0, msg: format!("unsupported dtype {}", header.dtype) });
    }
    let bin_path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut out = Vec::with_capacity(header.tensors.len());
    let mut expected_offset = 0;
    for (i, entry) in header.tensors.into_iter().enumerate() {
        let numel: usize = entry.shape.iter().product();
        let end = entry.offset + numel * 8;
        if entry.offset != expected_offset || end > bytes.len() {
            return Err(Error::Format {
                path: bin_path,
                line: i,
                msg: format!("tensor {} at byte {} does not fit the payload", entry.name, entry.offset),
            });
        }
        let data = bytes[entry.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        out.push((entry.name, Tensor::new(entry.shape, data)?));
        expected_offset = end;
    }
    if expected_offset != bytes.len() {
        return Err(Error::Format {
            path: bin_path,
            line: 0,
            msg: format!("{} trailing bytes after last tensor", bytes.len() - expected_offset),
        });
    }
    Ok(out)
}
