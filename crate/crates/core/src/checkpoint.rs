//! Binary checkpoint format.
//!
//! Layout:
//!
//! ```text
//! b"ALPEVAL1"                      8-byte magic
//! header_len: u64 little-endian    length of the JSON header in bytes
//! header: JSON                     {"format_version":1,"spec":{..},"seed":N,"num_params":M}
//! M × f64 little-endian            per layer: weights (row-major fan_in×fan_out), then biases
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a save/load round trip is
//! bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};
use crate::network::{ModelSpec, Parameters};

pub const MAGIC: &[u8; 8] = b"ALPEVAL1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: ModelSpec,
    seed: u64,
    num_params: usize,
}

pub fn encode_checkpoint(params: &Parameters) -> Vec<u8> {
    let header = Header {
        format_version: FORMAT_VERSION,
        spec: params.spec().clone(),
        seed: params.seed(),
        num_params: params.spec().num_params(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let values = params.flatten();
    let mut out = Vec::with_capacity(16 + json.len() + values.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Parameters> {
    if bytes.len() < 16 {
        return Err(Error::Checkpoint(format!(
            "file too short ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|n| n.checked_add(16))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    header
        .spec
        .validate()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if header.num_params != header.spec.num_params() {
        return Err(Error::Checkpoint(format!(
            "header declares {} parameters but spec {} needs {}",
            header.num_params,
            header.spec.describe(),
            header.spec.num_params()
        )));
    }
    let payload = &bytes[header_end..];
    if payload.len() != header.num_params * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {} payload bytes, found {}",
            header.num_params * 8,
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Parameters::from_flat(header.spec, &values, header.seed)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(params: &Parameters, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params))
}

pub fn load_checkpoint(path: &Path) -> Result<Parameters> {
    decode_checkpoint(&read_file(path)?)
}

/// Loads a checkpoint and checks that it realizes `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelSpec) -> Result<Parameters> {
    let params = load_checkpoint(path)?;
    if params.spec() != expected {
        return Err(Error::SpecMismatch {
            expected: expected.describe(),
            found: params.spec().describe(),
        });
    }
    Ok(params)
}
