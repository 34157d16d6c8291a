//! `vectors.bin`: embeddings keyed by chunk id, produced by `embed` and
//! consumed by `index build`.
//!
//! ```text
//! "EVVC" u16:version u32:dim u64:count
//! count × { u32:id_len id f32×dim }
//! u32:crc32
//! ```

use std::fs;
use std::path::Path;

use super::codec::{io_err, open, put_f32s, put_str, seal, u32_len, write_atomic, Reader};
use super::VIndexError;

pub const VECTORS_MAGIC: &[u8; 4] = b"EVVC";
pub const VECTORS_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    pub id: String,
    pub vector: Vec<f32>,
}

pub fn write_vectors(path: &Path, dim: usize, records: &[VectorRecord]) -> Result<(), VIndexError> {
    let mut buf = Vec::with_capacity(32 + records.len() * (dim * 4 + 32));
    buf.extend_from_slice(VECTORS_MAGIC);
    buf.extend_from_slice(&VECTORS_VERSION.to_le_bytes());
    buf.extend_from_slice(&u32_len(dim)?.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for rec in records {
        if rec.vector.len() != dim {
            return Err(VIndexError::DimensionMismatch {
                expected: dim,
                actual: rec.vector.len(),
            });
        }
        put_str(&mut buf, &rec.id)?;
        put_f32s(&mut buf, &rec.vector);
    }
    seal(&mut buf);
    write_atomic(path, &buf)
}

/// Returns `(dim, records)`.
pub fn read_vectors(path: &Path) -> Result<(usize, Vec<VectorRecord>), VIndexError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut r = Reader::new(open(&bytes, VECTORS_MAGIC, VECTORS_VERSION)?);
    let dim = r.u32()? as usize;
    let count = r.u64()?;
    let mut records = Vec::with_capacity((count as usize).min(1 << 20));
    for _ in 0..count {
        let id = r.string()?;
        let vector = r.f32s(dim)?;
        records.push(VectorRecord { id, vector });
    }
    r.finish()?;
    Ok((dim, records))
}
