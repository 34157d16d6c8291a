//! HNSW vector index with payloads and binary persistence.

mod codec;
mod hnsw;
mod vectors;

use std::path::PathBuf;

use thiserror::Error;

pub use codec::{load, persist, FORMAT_VERSION, MAGIC};
pub use hnsw::{brute_force_topk, HnswIndex, HnswParams, SearchHit};
pub use vectors::{read_vectors, write_vectors, VectorRecord, VECTORS_MAGIC, VECTORS_VERSION};

#[derive(Debug, Error)]
pub enum VIndexError {
    #[error("item {0} is already in the index")]
    DuplicateId(String),
    #[error("vector dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("vector contains NaN or infinity")]
    NonFinite,
    #[error("k must be at least 1")]
    BadK,
    #[error("invalid index parameters: {0}")]
    InvalidParams(String),
    #[error("corrupt index file: {0}")]
    CorruptFile(String),
    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
