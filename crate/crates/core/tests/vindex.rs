use std::collections::{HashSet, VecDeque};

use evrag_core::embedding::cosine_slices;
use evrag_core::vindex::{
    brute_force_topk, load, persist, read_vectors, write_vectors, HnswIndex, HnswParams, VIndexError, VectorRecord,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn build(n: usize, dim: usize, seed: u64, params: HnswParams) -> (HnswIndex, Vec<Vec<f32>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut index = HnswIndex::new(dim, params).unwrap();
    let mut vectors = Vec::with_capacity(n);
    for i in 0..n {
        let v = random_unit(&mut rng, dim);
        index.insert(format!("item-{i:05}"), &v, json!({ "i": i })).unwrap();
        vectors.push(v);
    }
    (index, vectors)
}

fn ids(hits: &[evrag_core::vindex::SearchHit]) -> Vec<&str> {
    hits.iter().map(|h| h.item_id.as_str()).collect()
}

#[test]
fn single_item_is_found_with_unit_score() {
    let mut index = HnswIndex::new(4, HnswParams::default()).unwrap();
    index.insert("only", &[0.5, 0.5, 0.5, 0.5], json!("p")).unwrap();
    assert_eq!(index.entry_point(), Some("only"));
    let hits = index.search(&[0.5, 0.5, 0.5, 0.5], 3, 64).unwrap();
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0].item_id, "only");
    assert!((hits[0].score - 1.0).abs() <= 1e-6);
    assert_eq!(hits[0].payload, json!("p"));
}

#[test]
fn empty_index_returns_nothing() {
    let index = HnswIndex::new(8, HnswParams::default()).unwrap();
    assert!(index.search(&[1.0; 8], 3, 64).unwrap().is_empty());
}

#[test]
fn rejects_bad_input() {
    let mut index = HnswIndex::new(3, HnswParams::default()).unwrap();
    index.insert("a", &[1.0, 0.0, 0.0], json!(null)).unwrap();
    assert!(matches!(
        index.insert("a", &[0.0, 1.0, 0.0], json!(null)),
        Err(VIndexError::DuplicateId(id)) if id == "a"
    ));
    assert!(matches!(
        index.insert("b", &[1.0, 0.0], json!(null)),
        Err(VIndexError::DimensionMismatch { expected: 3, actual: 2 })
    ));
    assert!(matches!(index.insert("z", &[0.0; 3], json!(null)), Err(VIndexError::ZeroVector)));
    assert!(matches!(index.search(&[1.0, 0.0, 0.0], 0, 10), Err(VIndexError::BadK)));
    assert_eq!(index.len(), 1);
}

#[test]
fn invalid_params_rejected() {
    let mut p = HnswParams::default();
    p.m = 1;
    assert!(HnswIndex::new(4, p).is_err());
    let mut p = HnswParams::default();
    p.ef_construction = 8;
    assert!(HnswIndex::new(4, p).is_err());
    let mut p = HnswParams::default();
    p.ml = 0.0;
    assert!(HnswIndex::new(4, p).is_err());
}

#[test]
fn stored_vector_query_ranks_itself_first() {
    let (index, vectors) = build(300, 32, 7, HnswParams::default());
    for (i, v) in vectors.iter().enumerate().step_by(17) {
        let hits = index.search(v, 3, 64).unwrap();
        assert_eq!(hits[0].item_id, format!("item-{i:05}"));
        assert!((hits[0].score - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn full_ef_matches_brute_force() {
    for seed in 0..10u64 {
        let n = 20 + (seed as usize) * 18;
        let (index, _) = build(n, 24, seed, HnswParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for _ in 0..10 {
            let q = random_unit(&mut rng, 24);
            let exact = index.brute_force_topk(&q, 3).unwrap();
            let approx = index.search(&q, 3, n).unwrap();
            assert_eq!(ids(&approx), ids(&exact));
        }
    }
}

#[test]
fn ties_break_on_item_id() {
    let mut index = HnswIndex::new(2, HnswParams::default()).unwrap();
    for id in ["c", "a", "b"] {
        index.insert(id, &[1.0, 0.0], json!(null)).unwrap();
    }
    index.insert("far", &[0.0, 1.0], json!(null)).unwrap();
    let hits = index.search(&[1.0, 0.0], 3, 10).unwrap();
    assert_eq!(ids(&hits), ["a", "b", "c"]);
    assert_eq!(ids(&index.brute_force_topk(&[1.0, 0.0], 3).unwrap()), ["a", "b", "c"]);
}

#[test]
fn free_brute_force_handles_small_inputs() {
    let one = vec![1.0f32, 0.0];
    let two = vec![0.6f32, 0.8];
    let payload = json!(null);
    let items = [("one", one.as_slice(), &payload), ("two", two.as_slice(), &payload)];
    let hits = brute_force_topk(items, &[0.0, 1.0], 10);
    assert_eq!(ids(&hits), ["two", "one"]);
    assert_eq!(brute_force_topk(items[..1].iter().copied(), &[0.0, 1.0], 3).len(), 1);
}

#[test]
fn neighbor_lists_respect_caps_and_graph_is_connected() {
    let params = HnswParams::with_m(4);
    let (index, _) = build(600, 16, 3, params.clone());
    for id in index.ids() {
        let level = index.level_of(id).unwrap();
        for layer in 0..=level {
            let cap = if layer == 0 { params.m0 } else { params.m };
            assert!(index.neighbors(id, layer).unwrap().len() <= cap);
        }
        assert!(index.neighbors(id, level + 1).is_none());
    }
    let entry = index.entry_point().unwrap();
    let mut seen = HashSet::from([entry.to_string()]);
    let mut queue = VecDeque::from([entry.to_string()]);
    while let Some(id) = queue.pop_front() {
        for n in index.neighbors(&id, 0).unwrap() {
            if seen.insert(n.to_string()) {
                queue.push_back(n.to_string());
            }
        }
    }
    assert_eq!(seen.len(), index.len());
}

#[test]
fn build_is_deterministic() {
    let (a, _) = build(200, 16, 11, HnswParams::default());
    let (b, _) = build(200, 16, 11, HnswParams::default());
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let q = random_unit(&mut rng, 16);
        assert_eq!(a.search(&q, 5, 32).unwrap(), b.search(&q, 5, 32).unwrap());
    }
}

#[test]
fn higher_ef_does_not_lower_recall() {
    let (index, _) = build(1500, 64, 21, HnswParams::with_m(8));
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let queries: Vec<Vec<f32>> = (0..100).map(|_| random_unit(&mut rng, 64)).collect();
    let recall = |ef: usize| {
        let mut found = 0;
        for q in &queries {
            let truth: HashSet<String> =
                index.brute_force_topk(q, 3).unwrap().into_iter().map(|h| h.item_id).collect();
            found += index
                .search(q, 3, ef)
                .unwrap()
                .iter()
                .filter(|h| truth.contains(&h.item_id))
                .count();
        }
        found as f64 / (3 * queries.len()) as f64
    };
    assert!(recall(128) >= recall(16));
}

#[test]
fn persist_round_trip_preserves_results() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.evrx");
    let (mut index, _) = build(500, 32, 9, HnswParams::default());
    persist(&index, &path).unwrap();
    let mut loaded = load(&path).unwrap();
    assert_eq!(loaded.len(), 500);
    assert_eq!(loaded.params(), index.params());
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let q = random_unit(&mut rng, 32);
        assert_eq!(index.search(&q, 3, 64).unwrap(), loaded.search(&q, 3, 64).unwrap());
    }
    // RNG state survives too: further inserts draw the same levels.
    for i in 0..50 {
        let v = random_unit(&mut rng, 32);
        index.insert(format!("late-{i}"), &v, json!(null)).unwrap();
        loaded.insert(format!("late-{i}"), &v, json!(null)).unwrap();
    }
    assert_eq!(index.to_bytes().unwrap(), loaded.to_bytes().unwrap());
}

#[test]
fn load_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.evrx");

    std::fs::write(&path, b"").unwrap();
    assert!(matches!(load(&path), Err(VIndexError::CorruptFile(_))));

    let (index, _) = build(30, 8, 1, HnswParams::default());
    let good = index.to_bytes().unwrap();

    let mut bumped = good.clone();
    bumped[4] += 1;
    std::fs::write(&path, &bumped).unwrap();
    assert!(matches!(load(&path), Err(VIndexError::VersionMismatch { found: 2, expected: 1 })));

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(HnswIndex::from_bytes(&magic), Err(VIndexError::CorruptFile(_))));

    let truncated = &good[..good.len() - 9];
    assert!(matches!(HnswIndex::from_bytes(truncated), Err(VIndexError::CorruptFile(_))));

    let mut flipped = good.clone();
    let mid = good.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(matches!(HnswIndex::from_bytes(&flipped), Err(VIndexError::CorruptFile(_))));

    assert!(matches!(
        load(&dir.path().join("missing.evrx")),
        Err(VIndexError::Io { .. })
    ));
}

#[test]
fn vectors_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.bin");
    let records = vec![
        VectorRecord {
            id: "doc#0".into(),
            vector: vec![0.25, -1.5, 3.0],
        },
        VectorRecord {
            id: "doc#1".into(),
            vector: vec![0.0, 1.0, 0.0],
        },
    ];
    write_vectors(&path, 3, &records).unwrap();
    assert_eq!(read_vectors(&path).unwrap(), (3, records.clone()));
    assert!(matches!(
        write_vectors(&path, 4, &records),
        Err(VIndexError::DimensionMismatch { expected: 4, actual: 3 })
    ));
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(read_vectors(&path), Err(VIndexError::CorruptFile(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scores_are_cosines_and_sorted(seed in any::<u64>(), n in 1usize..80, k in 1usize..8) {
        let (index, _) = build(n, 12, seed, HnswParams::with_m(4));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let q: Vec<f32> = (0..12).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
        let hits = index.search(&q, k, 16).unwrap();
        prop_assert_eq!(hits.len(), k.min(n));
        for h in &hits {
            let stored = index.vector(&h.item_id).unwrap();
            let cos = cosine_slices(&q, stored).unwrap();
            prop_assert!((h.score - cos).abs() <= 1e-6);
            prop_assert!((-1.0..=1.0).contains(&h.score));
        }
        for w in hits.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].item_id < w[1].item_id));
        }
    }

    #[test]
    fn caps_hold_for_any_insert_sequence(seed in any::<u64>(), n in 1usize..150) {
        let params = HnswParams::with_m(3);
        let (index, _) = build(n, 6, seed, params.clone());
        for id in index.ids() {
            for layer in 0..=index.level_of(id).unwrap() {
                let cap = if layer == 0 { params.m0 } else { params.m };
                prop_assert!(index.neighbors(id, layer).unwrap().len() <= cap);
            }
        }
    }
}
