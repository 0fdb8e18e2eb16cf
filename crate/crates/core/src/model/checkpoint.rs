//! Checkpoint file: little-endian `u64` header length, a JSON header, then
//! every parameter as little-endian `f32` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams};
use super::tape::Mat;
use crate::error::{Error, Result};

const FORMAT: &str = "asmplan-model";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
}

pub fn checkpoint_bytes(params: &ModelParams, seed: u64) -> Vec<u8> {
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: VERSION,
        config: params.config.clone(),
        seed,
        tensors: params
            .names
            .iter()
            .zip(&params.tensors)
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                rows: t.rows,
                cols: t.cols,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + 4 * params.num_scalars());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &params.tensors {
        for v in &t.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<(ModelParams, CheckpointHeader)> {
    let bad = |m: &str| Error::format("checkpoint", m);
    if bytes.len() < 8 {
        return Err(bad("truncated header length"));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().expect("eight bytes")) as usize;
    let body = &bytes[8..];
    if body.len() < len {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&body[..len]).map_err(|e| Error::format("checkpoint", e))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad("unknown format or version"));
    }
    let mut blob = body[len..].chunks_exact(4);
    let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum();
    if blob.len() != expected || !blob.remainder().is_empty() {
        return Err(bad("parameter blob size does not match header"));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let data = (&mut blob)
            .take(t.rows * t.cols)
            .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")) as f64)
            .collect();
        tensors.push(Mat::from_vec(t.rows, t.cols, data));
    }
    let names = header.tensors.iter().map(|t| t.name.clone()).collect();
    let params = ModelParams::from_tensors(&header.config, names, tensors)?;
    Ok((params, header))
}

pub fn save_checkpoint(params: &ModelParams, seed: u64, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(params, seed)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}
