//! Offline build steps: ingest, chunk, embed, index.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use evrag_core::chunker::{chunk_document, Chunk};
use evrag_core::embedding::EmbeddingClient;
use evrag_core::ingest::{ingest_corpus, text_file_name, ExtractionReport, ExtractorRegistry, Manifest, Origin};
use evrag_core::orchestrate::{PAYLOAD_TEXT, PAYLOAD_TITLE};
use evrag_core::vindex::{read_vectors, write_vectors, HnswIndex, HnswParams, SearchHit, VectorRecord};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Failure of a build step, split by whose fault it is.
#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
}

impl StepError {
    pub fn user(e: impl std::fmt::Display) -> Self {
        StepError::User(e.to_string())
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        StepError::Internal(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRecord {
    #[serde(flatten)]
    pub chunk: Chunk,
    pub title: String,
    pub origin: Origin,
}

pub fn ingest(manifest_path: &Path, out_dir: &Path) -> Result<Vec<ExtractionReport>, StepError> {
    let manifest = Manifest::load(manifest_path).map_err(StepError::user)?;
    ingest_corpus(&manifest, &ExtractorRegistry::with_builtin(), out_dir).map_err(StepError::user)
}

/// Chunks every manifest document from its normalized text in `texts_dir`.
pub fn chunk(manifest_path: &Path, texts_dir: &Path, target: usize) -> Result<Vec<ChunkRecord>, StepError> {
    let manifest = Manifest::load(manifest_path).map_err(StepError::user)?;
    let mut out = Vec::new();
    for entry in &manifest.entries {
        let doc = &entry.document;
        let path = texts_dir.join(text_file_name(&doc.doc_id));
        let text = fs::read_to_string(&path)
            .map_err(|e| StepError::User(format!("{}: {e} (run ingest first)", path.display())))?;
        for chunk in chunk_document(&doc.doc_id, &text, target).map_err(StepError::user)? {
            out.push(ChunkRecord {
                chunk,
                title: doc.title.clone(),
                origin: doc.origin,
            });
        }
    }
    Ok(out)
}

pub fn write_chunks(path: &Path, chunks: &[ChunkRecord]) -> Result<(), StepError> {
    let f = File::create(path).map_err(|e| StepError::User(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(f);
    for c in chunks {
        serde_json::to_writer(&mut w, c).map_err(StepError::internal)?;
        w.write_all(b"\n").map_err(StepError::internal)?;
    }
    w.flush().map_err(StepError::internal)
}

pub fn read_chunks(path: &Path) -> Result<Vec<ChunkRecord>, StepError> {
    let f = File::open(path).map_err(|e| StepError::User(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(StepError::internal)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| StepError::User(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn embed(chunks: &[ChunkRecord], embedder: &EmbeddingClient) -> Result<Vec<VectorRecord>, StepError> {
    if chunks.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = chunks.iter().map(|c| c.chunk.text.clone()).collect();
    let vectors = embedder.embed_texts(&texts).map_err(StepError::internal)?;
    Ok(chunks
        .iter()
        .zip(vectors)
        .map(|(c, v)| VectorRecord {
            id: c.chunk.chunk_id.clone(),
            vector: v.into_values(),
        })
        .collect())
}

pub fn write_embeddings(path: &Path, dim: usize, vectors: &[VectorRecord]) -> Result<(), StepError> {
    write_vectors(path, dim, vectors).map_err(StepError::user)
}

/// Builds the index; every vector must have a matching chunk.
pub fn build_index(
    chunks: &[ChunkRecord],
    dim: usize,
    vectors: &[VectorRecord],
    params: HnswParams,
) -> Result<HnswIndex, StepError> {
    let by_id: std::collections::HashMap<&str, &ChunkRecord> =
        chunks.iter().map(|c| (c.chunk.chunk_id.as_str(), c)).collect();
    let mut index = HnswIndex::new(dim, params).map_err(StepError::user)?;
    for v in vectors {
        let c = by_id
            .get(v.id.as_str())
            .ok_or_else(|| StepError::User(format!("vector {} has no chunk record", v.id)))?;
        let payload = json!({
            PAYLOAD_TITLE: c.title,
            PAYLOAD_TEXT: c.chunk.text,
            "doc_id": c.chunk.doc_id,
            "origin": c.origin,
        });
        index.insert(v.id.clone(), &v.vector, payload).map_err(StepError::user)?;
    }
    Ok(index)
}

pub fn build_index_files(chunks_path: &Path, vectors_path: &Path, params: HnswParams) -> Result<HnswIndex, StepError> {
    let chunks = read_chunks(chunks_path)?;
    let (dim, vectors) = read_vectors(vectors_path).map_err(StepError::user)?;
    build_index(&chunks, dim, &vectors, params)
}

pub fn query(
    index: &HnswIndex,
    embedder: &EmbeddingClient,
    text: &str,
    k: usize,
    ef: Option<usize>,
) -> Result<Vec<SearchHit>, StepError> {
    if embedder.dim() != index.dim() {
        return Err(StepError::User(format!(
            "embedder produces {}-d vectors but the index holds {}-d vectors",
            embedder.dim(),
            index.dim()
        )));
    }
    let q = embedder.embed_one(text).map_err(StepError::user)?;
    match ef {
        Some(ef) => index.search(q.values(), k, ef),
        None => index.search_default(q.values(), k),
    }
    .map_err(StepError::user)
}

/// Every step in one go, leaving intermediate files in `work_dir`.
pub fn build_corpus_index(
    manifest_path: &Path,
    work_dir: &Path,
    embedder: &EmbeddingClient,
    target: usize,
) -> Result<HnswIndex, StepError> {
    let texts = work_dir.join("texts");
    ingest(manifest_path, &texts)?;
    let chunks = chunk(manifest_path, &texts, target)?;
    write_chunks(&work_dir.join("chunks.jsonl"), &chunks)?;
    let vectors = embed(&chunks, embedder)?;
    write_embeddings(&work_dir.join("vectors.bin"), embedder.dim(), &vectors)?;
    build_index(&chunks, embedder.dim(), &vectors, HnswParams::default())
}
