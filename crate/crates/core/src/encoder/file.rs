use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::EmbeddingMatrix;

pub const MAGIC: &[u8; 8] = b"NILCEMB1";
const HEADER: usize = 16;

/// Decodes a NILCEMB1 buffer: magic, little-endian `u32` row and column
/// counts, then `n * d` little-endian `f32` values in row-major order.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(Error::EmbeddingFormat("missing NILCEMB1 header".into()));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    if d == 0 {
        return Err(Error::EmbeddingFormat("dimension must be at least 1".into()));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::EmbeddingFormat("header sizes overflow".into()))?;
    let payload = &bytes[HEADER..];
    if payload.len() != expected {
        return Err(Error::EmbeddingFormat(format!(
            "header declares {n} x {d} values ({expected} bytes) but payload has {} bytes",
            payload.len()
        )));
    }
    let mut data = Vec::with_capacity(n * d);
    for (idx, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(Error::EmbeddingFormat(format!("non-finite value in row {}", idx / d)));
        }
        data.push(f64::from(v));
    }
    EmbeddingMatrix::new(n, d, data)
}

/// Encodes a matrix as NILCEMB1. Values are narrowed to `f32`.
pub fn encode_embeddings(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let n = u32::try_from(m.n()).map_err(|_| Error::EmbeddingFormat("too many rows".into()))?;
    let d = u32::try_from(m.dim()).map_err(|_| Error::EmbeddingFormat("dimension too large".into()))?;
    let mut out = Vec::with_capacity(HEADER + m.as_slice().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for &v in m.as_slice() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::EmbeddingFormat(format!("value {v} does not fit in f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn load_embedding_file(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = std::fs::read(path)?;
    decode_embeddings(&bytes).map_err(|e| match e {
        Error::EmbeddingFormat(msg) => Error::EmbeddingFormat(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_embedding_file(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    let bytes = encode_embeddings(m)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}
