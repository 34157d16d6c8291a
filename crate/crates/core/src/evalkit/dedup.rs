use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::embedding::{cosine_similarity, Embedding, EmbeddingClient};

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.90;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedPair {
    /// Index of the earlier question that was kept.
    pub kept: usize,
    pub removed: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupResult {
    /// Indices of surviving questions, in input order.
    pub kept: Vec<usize>,
    pub removed: Vec<RemovedPair>,
}

/// Greedy, first wins: item `j` is dropped when its similarity to some
/// earlier kept item reaches `threshold`. The pair recorded is the most
/// similar kept item.
pub fn dedup_vectors(vectors: &[Embedding], threshold: f64) -> Result<DedupResult, EvalError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EvalError::BadThreshold(threshold));
    }
    let mut kept: Vec<usize> = Vec::new();
    let mut removed = Vec::new();
    for (j, v) in vectors.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for &i in &kept {
            let sim = cosine_similarity(&vectors[i], v).map_err(|e| EvalError::Embedding(e.to_string()))?;
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((i, sim));
            }
        }
        match best {
            Some((i, sim)) if sim >= threshold => removed.push(RemovedPair {
                kept: i,
                removed: j,
                similarity: sim,
            }),
            _ => kept.push(j),
        }
    }
    Ok(DedupResult { kept, removed })
}

pub fn dedup_questions(
    questions: &[String],
    embedder: &EmbeddingClient,
    threshold: f64,
) -> Result<DedupResult, EvalError> {
    if questions.is_empty() {
        return Err(EvalError::Empty);
    }
    let vectors = embedder
        .embed_texts(questions)
        .map_err(|e| EvalError::Embedding(e.to_string()))?;
    dedup_vectors(&vectors, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(v: &[f32]) -> Embedding {
        Embedding::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn identical_questions_collapse() {
        let client = EmbeddingClient::deterministic(128);
        let qs = vec!["What is heroin?".to_string(), "What is heroin?".to_string()];
        let r = dedup_questions(&qs, &client, 0.9).unwrap();
        assert_eq!(r.kept, [0]);
        assert_eq!(r.removed[0].kept, 0);
        assert!((r.removed[0].similarity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_vectors_survive() {
        let r = dedup_vectors(&[e(&[1.0, 0.0]), e(&[0.0, 1.0])], 0.9).unwrap();
        assert_eq!(r.kept, [0, 1]);
        assert!(r.removed.is_empty());
    }

    #[test]
    fn threshold_bounds() {
        assert!(dedup_vectors(&[], 0.0).is_err());
        assert!(dedup_vectors(&[], 1.5).is_err());
        assert!(dedup_vectors(&[], 1.0).unwrap().kept.is_empty());
    }

    #[test]
    fn removal_only_against_kept_items() {
        // b is close to a, c is close to b but not to a: c survives because
        // b was removed.
        let a = e(&[1.0, 0.0]);
        let b = e(&[0.95, 0.312]);
        let c = e(&[0.81, 0.586]);
        let r = dedup_vectors(&[a, b, c], 0.95).unwrap();
        assert_eq!(r.kept, [0, 2]);
    }

    proptest! {
        #[test]
        fn output_is_a_fixed_point(raw in proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, 3), 1..30)) {
            let vs: Vec<Embedding> = raw.iter().filter_map(|v| Embedding::normalized(v.clone()).ok()).collect();
            let r = dedup_vectors(&vs, 0.9).unwrap();
            prop_assert!(r.kept.windows(2).all(|w| w[0] < w[1]));
            let survivors: Vec<Embedding> = r.kept.iter().map(|&i| vs[i].clone()).collect();
            let again = dedup_vectors(&survivors, 0.9).unwrap();
            prop_assert_eq!(again.kept.len(), survivors.len());
        }
    }
}
