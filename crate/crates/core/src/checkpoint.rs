//! Single-file encoder checkpoints.
//!
//! Layout: the 8-byte magic `TIMEHUT1`, a little-endian `u32` header length, a
//! JSON header (encoder config, free-form metadata, tensor index), then every
//! parameter as little-endian `f64` in index order.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig, KERNEL_SIZE};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TIMEHUT1";
const MAX_HEADER: usize = 16 << 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    #[serde(default)]
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: Encoder,
    pub metadata: serde_json::Value,
}

fn expected_parameters(c: &EncoderConfig) -> Option<usize> {
    let h = c.hidden_dims;
    let input = c.input_dims.checked_mul(h)?.checked_add(h)?;
    let conv = h.checked_mul(h)?.checked_mul(KERNEL_SIZE)?.checked_add(h)?;
    let blocks = conv.checked_mul(2)?.checked_mul(c.depth)?;
    let output = h.checked_mul(c.output_dims)?.checked_add(c.output_dims)?;
    input.checked_add(blocks)?.checked_add(output)
}

pub fn encode(encoder: &Encoder, metadata: &serde_json::Value) -> Result<Vec<u8>> {
    let mut offset = 0;
    let tensors = encoder
        .named_tensors()
        .into_iter()
        .map(|(name, shape, data)| {
            let e = TensorEntry {
                name,
                shape,
                offset,
            };
            offset += data.len();
            e
        })
        .collect();
    let header = Header {
        config: encoder.config.clone(),
        metadata: metadata.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + offset * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in encoder.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: String| Error::Checkpoint(m);
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("missing TIMEHUT1 magic".into()));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if hlen > MAX_HEADER || bytes.len() < 12 + hlen {
        return Err(bad(format!("header length {hlen} out of range")));
    }
    let header: Header =
        serde_json::from_slice(&bytes[12..12 + hlen]).map_err(|e| bad(format!("header: {e}")))?;
    header.config.validate()?;
    let body = &bytes[12 + hlen..];
    let n = expected_parameters(&header.config)
        .ok_or_else(|| bad("parameter count overflows".into()))?;
    if body.len()
        != n.checked_mul(8)
            .ok_or_else(|| bad("parameter count overflows".into()))?
    {
        return Err(bad(format!(
            "expected {} data bytes, found {}",
            n * 8,
            body.len()
        )));
    }

    let mut encoder = Encoder::new(header.config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let layout: Vec<(String, Vec<usize>, usize)> = encoder
        .named_tensors()
        .into_iter()
        .map(|(name, shape, d)| (name, shape, d.len()))
        .collect();
    if layout.len() != header.tensors.len() {
        return Err(bad(format!(
            "expected {} tensors, index has {}",
            layout.len(),
            header.tensors.len()
        )));
    }
    for ((name, shape, len), (entry, dst)) in layout
        .into_iter()
        .zip(header.tensors.iter().zip(encoder.tensors_mut()))
    {
        if entry.name != name || entry.shape != shape {
            return Err(bad(format!(
                "tensor {:?} {:?} does not match expected {name:?} {shape:?}",
                entry.name, entry.shape
            )));
        }
        let end = entry.offset.checked_add(len).filter(|&e| e <= n);
        let Some(end) = end else {
            return Err(bad(format!("tensor {name} offset out of range")));
        };
        for (d, chunk) in dst
            .iter_mut()
            .zip(body[entry.offset * 8..end * 8].chunks_exact(8))
        {
            *d = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    Ok(Checkpoint {
        encoder,
        metadata: header.metadata,
    })
}

pub fn save(path: impl AsRef<Path>, encoder: &Encoder, metadata: &serde_json::Value) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(encoder, metadata)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
