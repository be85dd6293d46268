//! Embedding persistence.
//!
//! Layout (little-endian): 8-byte magic, `u32` kind, `u64` n, `u64` k,
//! `u64` seed, then `n * k` row-major `f64` codes. Laplacian embeddings
//! append `k` eigenvalues and `k` column scales.

use std::io::{Read, Write};
use std::path::Path;

use super::{EmbeddingKind, PositionalEmbedding, SpectralError};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"GARFEMB1";

impl PositionalEmbedding {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(36 + 8 * (self.data.len() + 2 * self.k));
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&self.kind.code().to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.k as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for x in self.data.iter().chain(&self.eigenvalues).chain(&self.column_scales) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SpectralError> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| format_err("truncated header"))?;
        if &magic != EMBEDDING_MAGIC {
            return Err(format_err("bad magic"));
        }
        let kind_code = read_u32(&mut r)?;
        let kind = EmbeddingKind::from_code(kind_code).ok_or_else(|| format_err(&format!("unknown kind {kind_code}")))?;
        let n = read_u64(&mut r)? as usize;
        let k = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let floats = r.len() / 8;
        let trailer = if kind == EmbeddingKind::Laplacian { 2 * k } else { 0 };
        if r.len() % 8 != 0 || Some(floats) != n.checked_mul(k).map(|nk| nk + trailer) {
            return Err(format_err(&format!("payload of {} bytes does not match n = {n}, k = {k}", r.len())));
        }
        let values: Vec<f64> =
            r.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        let (data, rest) = values.split_at(n * k);
        let (eigenvalues, column_scales) = rest.split_at(rest.len() / 2);
        Ok(Self {
            kind,
            n,
            k,
            seed,
            data: data.to_vec(),
            eigenvalues: eigenvalues.to_vec(),
            column_scales: column_scales.to_vec(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SpectralError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SpectralError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn format_err(msg: &str) -> SpectralError {
    SpectralError::Format(msg.to_string())
}

fn read_u32(r: &mut &[u8]) -> Result<u32, SpectralError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| format_err("truncated header"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64, SpectralError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| format_err("truncated header"))?;
    Ok(u64::from_le_bytes(b))
}
