//! Hashed character-trigram embeddings: no model, fully deterministic.

use super::{Embedding, EmbeddingError};

const SEED: u64 = 0x5eed_c0de_2024_0001;

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    // splitmix64 finalizer; FNV alone mixes the low bits poorly.
    hash ^= hash >> 30;
    hash = hash.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    hash ^= hash >> 27;
    hash = hash.wrapping_mul(0x94d0_49bb_1331_11eb);
    hash ^ (hash >> 31)
}

/// Lower-cased text padded with one space on each side is cut into
/// overlapping character trigrams. Each trigram adds ±1 at a hashed index.
pub fn deterministic_embed(text: &str, dim: usize) -> Result<Embedding, EmbeddingError> {
    if text.trim().is_empty() {
        return Err(EmbeddingError::EmptyText);
    }
    if dim == 0 {
        return Err(EmbeddingError::Config("dim must be at least 1".into()));
    }
    let padded: Vec<char> = std::iter::once(' ')
        .chain(text.trim().to_lowercase().chars())
        .chain(std::iter::once(' '))
        .collect();
    let mut values = vec![0.0f32; dim];
    let mut buf = [0u8; 12];
    for gram in padded.windows(3) {
        let mut len = 0;
        for c in gram {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let h = fnv1a(&buf[..len], SEED);
        let idx = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        values[idx] += sign;
    }
    // Colliding trigrams can cancel to an all-zero vector on tiny dims.
    if values.iter().all(|&v| v == 0.0) {
        values[(fnv1a(text.as_bytes(), SEED) % dim as u64) as usize] = 1.0;
    }
    Embedding::normalized(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine_similarity, DEFAULT_DIM};

    fn cos(a: &str, b: &str) -> f64 {
        cosine_similarity(
            &deterministic_embed(a, DEFAULT_DIM).unwrap(),
            &deterministic_embed(b, DEFAULT_DIM).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn unit_norm() {
        let e = deterministic_embed("aaaa", DEFAULT_DIM).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-6);
        assert_eq!(e.dim(), DEFAULT_DIM);
    }

    #[test]
    fn identical_text_identical_vector() {
        assert_eq!(cos("the drug schedule", "the drug schedule"), 1.0);
        assert_eq!(
            deterministic_embed("x y", 64).unwrap(),
            deterministic_embed("x y", 64).unwrap()
        );
    }

    #[test]
    fn shared_trigrams_score_higher() {
        let near = cos("opioid overdose risk", "opioid overdose risks");
        let far = cos("opioid overdose risk", "quarterly tax filing");
        assert!(near > far, "near={near} far={far}");
        assert!(near > 0.9);
    }

    #[test]
    fn empty_text_rejected() {
        assert_eq!(deterministic_embed(" ", 8), Err(EmbeddingError::EmptyText));
    }

    #[test]
    fn tiny_dimension_never_zero() {
        for t in ["a", "ab", "abc", "abcd", "zz top"] {
            assert!(deterministic_embed(t, 1).unwrap().is_unit());
        }
    }
}
