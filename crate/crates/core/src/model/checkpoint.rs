//! Checkpoint files.
//!
//! ```text
//! "FMCK"            4 bytes magic
//! version           u32 LE (1)
//! header_len        u64 LE
//! header            header_len bytes of UTF-8 JSON:
//!                     { "model": ModelConfig, "run": <caller config>,
//!                       "tensors": [{ "name", "shape", "offset" }, ...],
//!                       "total_params": n }
//! payload           f32 LE values; each tensor starts at its byte offset
//!                   relative to the start of the payload, row-major
//! ```
//!
//! Only parameter values are stored; optimizer moments are not.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Autoencoder, ModelConfig};
use crate::numerics::{SeedStream, Tensor};

const MAGIC: &[u8; 4] = b"FMCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header<C> {
    model: ModelConfig,
    run: C,
    tensors: Vec<TensorEntry>,
    total_params: usize,
}

pub fn save_checkpoint<C: Serialize>(model: &Autoencoder<f32>, run: &C, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    let mut offset = 0u64;
    let mut payload = Vec::with_capacity(model.parameter_count() * 4);
    for p in model.params() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.shape().to_vec(),
            offset,
        });
        for v in p.value.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        offset += 4 * p.numel() as u64;
    }
    let header = Header {
        model: model.config().clone(),
        run,
        tensors,
        total_params: model.parameter_count(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Loads a checkpoint, rebuilding the model from the stored configuration.
pub fn load_checkpoint<C: DeserializeOwned>(path: &Path) -> Result<(Autoencoder<f32>, C)> {
    let (header, payload) = read_raw::<C>(path)?;
    let model = restore(&header.model, &header.tensors, &payload, path)?;
    Ok((model, header.run))
}

/// Loads a checkpoint that must match `expected`; any name or shape
/// disagreement is reported.
pub fn load_checkpoint_as<C: DeserializeOwned>(path: &Path, expected: &ModelConfig) -> Result<(Autoencoder<f32>, C)> {
    let (header, payload) = read_raw::<C>(path)?;
    let model = restore(expected, &header.tensors, &payload, path)?;
    Ok((model, header.run))
}

fn read_raw<C: DeserializeOwned>(path: &Path) -> Result<(Header<C>, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            "file shorter than checkpoint preamble",
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(path, 0, "bad magic, not a checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(
            path,
            4,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::format(path, 8, format!("header length {header_len} exceeds file")))?;
    let header: Header<C> =
        serde_json::from_slice(&bytes[16..body]).map_err(|e| Error::format(path, 16, format!("header json: {e}")))?;
    Ok((header, bytes[body..].to_vec()))
}

fn restore(config: &ModelConfig, entries: &[TensorEntry], payload: &[u8], path: &Path) -> Result<Autoencoder<f32>> {
    let mut model = Autoencoder::<f32>::new(config.clone(), &SeedStream::new(0))?;
    let expected: Vec<(String, Vec<usize>)> = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.shape().to_vec()))
        .collect();

    let mut problems = Vec::new();
    for (i, (name, shape)) in expected.iter().enumerate() {
        match entries.get(i) {
            None => problems.push(format!("missing tensor '{name}' {shape:?}")),
            Some(e) if &e.name != name => problems.push(format!("tensor #{i}: expected '{name}', found '{}'", e.name)),
            Some(e) if &e.shape != shape => problems.push(format!(
                "tensor '{name}': expected shape {shape:?}, found {:?}",
                e.shape
            )),
            _ => {}
        }
    }
    for e in entries.iter().skip(expected.len()) {
        problems.push(format!("unexpected tensor '{}'", e.name));
    }
    if !problems.is_empty() {
        return Err(Error::Checkpoint(format!(
            "{} does not match the model configuration: {}",
            path.display(),
            problems.join("; ")
        )));
    }

    let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if payload.len() != total * 4 {
        return Err(Error::format(
            path,
            payload.len() as u64,
            format!("payload holds {} bytes, expected {}", payload.len(), total * 4),
        ));
    }
    let mut values = Vec::with_capacity(entries.len());
    for e in entries {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + 4 * n;
        if end > payload.len() {
            return Err(Error::format(
                path,
                e.offset,
                format!("tensor '{}' runs past payload", e.name),
            ));
        }
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                path,
                e.offset + 4 * k as u64,
                format!("non-finite value in tensor '{}'", e.name),
            ));
        }
        values.push(Tensor::new(e.shape.clone(), data)?);
    }
    model.load_values(values);
    Ok(model)
}
