use std::sync::Arc;

use serde_json::Value;

use super::{OrchestrateError, RetrievedEvidence, SourceKind, SourceWeights};
use crate::embedding::EmbeddingClient;
use crate::pubmed::{Article, LitQuery, LiteratureSource};
use crate::vindex::{HnswIndex, SearchHit};

pub const K_LOCAL: usize = 3;
pub const K_LIT: usize = 3;

/// Payload keys the index is expected to carry per chunk.
pub const PAYLOAD_TITLE: &str = "title";
pub const PAYLOAD_TEXT: &str = "text";

#[derive(Debug, Clone, PartialEq)]
pub struct DualRetrieval {
    /// Fused list, weight descending.
    pub evidence: Vec<RetrievedEvidence>,
    /// The literature path failed or was not configured.
    pub degraded: bool,
    pub literature_error: Option<String>,
}

fn payload_str<'a>(payload: &'a Value, key: &str) -> Option<&'a str> {
    payload.get(key).and_then(Value::as_str)
}

fn local_evidence(hit: SearchHit, w_local: f64) -> RetrievedEvidence {
    let title = payload_str(&hit.payload, PAYLOAD_TITLE).unwrap_or(&hit.item_id).to_string();
    let snippet = payload_str(&hit.payload, PAYLOAD_TEXT).unwrap_or_default().to_string();
    RetrievedEvidence {
        source_kind: SourceKind::LocalRegulatory,
        weight: w_local * hit.score.max(0.0),
        reference: hit.item_id,
        display_title: title,
        score: hit.score,
        snippet,
        article: None,
    }
}

/// Rank-decay score for the literature path: 1 - rank/k.
pub fn literature_score(rank: usize, k_lit: usize) -> f64 {
    1.0 - rank as f64 / k_lit as f64
}

fn literature_evidence(rank: usize, article: Article, k_lit: usize, w_lit: f64) -> RetrievedEvidence {
    let score = literature_score(rank, k_lit);
    let snippet = if article.abstract_text.trim().is_empty() {
        article.title.clone()
    } else {
        article.abstract_text.clone()
    };
    RetrievedEvidence {
        source_kind: SourceKind::Literature,
        reference: article.pmid.clone(),
        display_title: article.title.clone(),
        score,
        weight: w_lit * score,
        snippet,
        article: Some(article),
    }
}

/// Stable sort by weight descending; local items win ties.
pub fn fuse(mut evidence: Vec<RetrievedEvidence>) -> Vec<RetrievedEvidence> {
    evidence.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then_with(|| (a.source_kind as u8).cmp(&(b.source_kind as u8)))
    });
    evidence
}

/// Runs the local and literature paths concurrently and fuses the results.
/// Only the local path can fail the call.
pub fn retrieve_dual(
    question: &str,
    weights: &SourceWeights,
    index: Option<&HnswIndex>,
    embedder: &EmbeddingClient,
    literature: Option<&Arc<dyn LiteratureSource>>,
    k_local: usize,
    k_lit: usize,
) -> Result<DualRetrieval, OrchestrateError> {
    let index = index.ok_or_else(|| OrchestrateError::IndexUnavailable("no index loaded".into()))?;
    let (local, lit) = std::thread::scope(|s| {
        let lit = s.spawn(|| -> Result<Vec<Article>, String> {
            let source = literature.ok_or("literature source not configured")?;
            let mut q = LitQuery::new(question);
            q.max_results = k_lit;
            source.search_literature(&q).map_err(|e| e.to_string())
        });
        let local = (|| -> Result<Vec<SearchHit>, OrchestrateError> {
            if index.is_empty() {
                return Ok(Vec::new());
            }
            let q = embedder
                .embed_one(question)
                .map_err(|e| OrchestrateError::IndexUnavailable(format!("query embedding failed: {e}")))?;
            index
                .search_default(q.values(), k_local)
                .map_err(|e| OrchestrateError::IndexUnavailable(e.to_string()))
        })();
        let lit = lit.join().unwrap_or_else(|_| Err("literature worker panicked".into()));
        (local, lit)
    });
    let mut evidence: Vec<RetrievedEvidence> = local?.into_iter().map(|h| local_evidence(h, weights.w_local)).collect();
    let (degraded, literature_error) = match lit {
        Ok(articles) => {
            evidence.extend(
                articles
                    .into_iter()
                    .take(k_lit)
                    .enumerate()
                    .map(|(rank, a)| literature_evidence(rank, a, k_lit, weights.w_lit)),
            );
            (false, None)
        }
        Err(e) => {
            tracing::warn!(error = %e, "literature path unavailable, answering from local sources only");
            (true, Some(e))
        }
    };
    Ok(DualRetrieval {
        evidence: fuse(evidence),
        degraded,
        literature_error,
    })
}
