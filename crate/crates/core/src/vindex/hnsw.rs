use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::VIndexError;
use crate::embedding::cosine_slices;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Max neighbors per node on layers above 0.
    pub m: usize,
    /// Max neighbors per node on layer 0.
    pub m0: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Level multiplier, `1/ln(m)` by default.
    pub ml: f64,
    pub rng_seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self::with_m(16)
    }
}

impl HnswParams {
    pub fn with_m(m: usize) -> Self {
        Self {
            m,
            m0: 2 * m,
            ef_construction: 200,
            ef_search: 64,
            ml: 1.0 / (m as f64).ln(),
            rng_seed: 0x00C0_FFEE,
        }
    }

    pub fn validate(&self) -> Result<(), VIndexError> {
        let bad = |msg: &str| Err(VIndexError::InvalidParams(msg.to_string()));
        if self.m < 2 {
            return bad("m must be at least 2");
        }
        if self.m0 < self.m {
            return bad("m0 must be at least m");
        }
        if self.ef_construction < self.m {
            return bad("ef_construction must be at least m");
        }
        if self.ef_search < 1 {
            return bad("ef_search must be at least 1");
        }
        if !(self.ml > 0.0 && self.ml.is_finite()) {
            return bad("ml must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub item_id: String,
    pub score: f64,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Node {
    pub id: String,
    pub vector: Vec<f32>,
    pub payload: Value,
    /// `links[layer]` for every layer `0..=level`.
    pub links: Vec<Vec<u32>>,
}

impl Node {
    pub fn level(&self) -> usize {
        self.links.len() - 1
    }
}

/// Candidate ordered by similarity, ties by lower node index.
#[derive(Debug, Clone, Copy)]
struct Scored {
    sim: f32,
    idx: u32,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    /// Greater means closer to the query.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let tail: f32 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    acc.iter().sum::<f32>() + tail
}

fn unit(vector: &[f32]) -> Result<Vec<f32>, VIndexError> {
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(VIndexError::NonFinite);
    }
    let norm = vector.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(VIndexError::ZeroVector);
    }
    Ok(vector.iter().map(|&v| (f64::from(v) / norm) as f32).collect())
}

/// Sorts hits by score descending, then item id ascending.
pub(crate) fn sort_hits(hits: &mut [SearchHit]) {
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.item_id.cmp(&b.item_id)));
}

/// Hierarchical navigable small-world graph over unit vectors. Similarity is
/// the dot product, which equals cosine for normalized inputs. Inserts
/// normalize their vector, so callers may pass any non-zero vector.
#[derive(Debug, Clone)]
pub struct HnswIndex {
    pub(crate) params: HnswParams,
    pub(crate) dim: usize,
    pub(crate) nodes: Vec<Node>,
    pub(crate) by_id: HashMap<String, u32>,
    pub(crate) entry: Option<u32>,
    pub(crate) rng: ChaCha8Rng,
}

impl HnswIndex {
    pub fn new(dim: usize, params: HnswParams) -> Result<Self, VIndexError> {
        params.validate()?;
        if dim == 0 {
            return Err(VIndexError::InvalidParams("dim must be at least 1".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        Ok(Self {
            params,
            dim,
            nodes: Vec::new(),
            by_id: HashMap::new(),
            entry: None,
            rng,
        })
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.by_id.contains_key(item_id)
    }

    pub fn payload(&self, item_id: &str) -> Option<&Value> {
        self.by_id.get(item_id).map(|&i| &self.nodes[i as usize].payload)
    }

    /// Stored (normalized) vector.
    pub fn vector(&self, item_id: &str) -> Option<&[f32]> {
        self.by_id.get(item_id).map(|&i| self.nodes[i as usize].vector.as_slice())
    }

    pub fn level_of(&self, item_id: &str) -> Option<usize> {
        self.by_id.get(item_id).map(|&i| self.nodes[i as usize].level())
    }

    pub fn entry_point(&self) -> Option<&str> {
        self.entry.map(|e| self.nodes[e as usize].id.as_str())
    }

    pub fn max_level(&self) -> usize {
        self.entry.map_or(0, |e| self.nodes[e as usize].level())
    }

    /// Item ids in insertion order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.id.as_str())
    }

    /// Neighbor ids of `item_id` on `layer`, or `None` if the item does not
    /// reach that layer.
    pub fn neighbors(&self, item_id: &str, layer: usize) -> Option<Vec<&str>> {
        let node = &self.nodes[*self.by_id.get(item_id)? as usize];
        let links = node.links.get(layer)?;
        Some(links.iter().map(|&n| self.nodes[n as usize].id.as_str()).collect())
    }

    fn capacity(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.m0
        } else {
            self.params.m
        }
    }

    fn draw_level(&mut self) -> usize {
        // gen() is in [0, 1); flip it to (0, 1] so ln never sees zero.
        let u = 1.0 - self.rng.gen::<f64>();
        (-u.ln() * self.params.ml).floor() as usize
    }

    fn sim(&self, query: &[f32], idx: u32) -> f32 {
        dot(query, &self.nodes[idx as usize].vector)
    }

    /// Best-first search on one layer. Returns up to `ef` nodes, best first.
    fn search_layer(&self, query: &[f32], entry_points: &[Scored], ef: usize, layer: usize) -> Vec<Scored> {
        let mut visited = vec![false; self.nodes.len()];
        let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
        let mut results: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        for &ep in entry_points {
            if !visited[ep.idx as usize] {
                visited[ep.idx as usize] = true;
                candidates.push(ep);
                results.push(Reverse(ep));
                if results.len() > ef {
                    results.pop();
                }
            }
        }
        while let Some(current) = candidates.pop() {
            let worst = results.peek().expect("results never empty here").0;
            if current < worst && results.len() >= ef {
                break;
            }
            let links = &self.nodes[current.idx as usize].links;
            let Some(neighbors) = links.get(layer) else { continue };
            for &n in neighbors {
                if visited[n as usize] {
                    continue;
                }
                visited[n as usize] = true;
                let cand = Scored {
                    sim: self.sim(query, n),
                    idx: n,
                };
                let worst = results.peek().expect("results never empty here").0;
                if results.len() < ef || cand > worst {
                    candidates.push(cand);
                    results.push(Reverse(cand));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Greedy walk from the entry point down to layer 1.
    fn greedy_descend(&self, query: &[f32]) -> Vec<Scored> {
        let entry = self.entry.expect("non-empty index has an entry point");
        let mut ep = vec![Scored {
            sim: self.sim(query, entry),
            idx: entry,
        }];
        let top = self.nodes[entry as usize].level();
        for layer in (1..=top).rev() {
            ep = self.search_layer(query, &ep, 1, layer);
        }
        ep
    }

    fn prune(&mut self, idx: u32, layer: usize) {
        let cap = self.capacity(layer);
        let node = &self.nodes[idx as usize];
        if node.links[layer].len() <= cap {
            return;
        }
        let base = node.vector.clone();
        let mut scored: Vec<Scored> = node.links[layer]
            .iter()
            .map(|&n| Scored {
                sim: self.sim(&base, n),
                idx: n,
            })
            .collect();
        scored.sort_by(|a, b| b.cmp(a));
        scored.truncate(cap);
        self.nodes[idx as usize].links[layer] = scored.into_iter().map(|s| s.idx).collect();
    }

    pub fn insert(&mut self, item_id: impl Into<String>, vector: &[f32], payload: Value) -> Result<(), VIndexError> {
        let item_id = item_id.into();
        if vector.len() != self.dim {
            return Err(VIndexError::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if self.by_id.contains_key(&item_id) {
            return Err(VIndexError::DuplicateId(item_id));
        }
        let vector = unit(vector)?;
        let level = self.draw_level();
        let idx = u32::try_from(self.nodes.len()).map_err(|_| VIndexError::InvalidParams("index full".into()))?;

        let Some(entry) = self.entry else {
            self.nodes.push(Node {
                id: item_id.clone(),
                vector,
                payload,
                links: vec![Vec::new(); level + 1],
            });
            self.by_id.insert(item_id, idx);
            self.entry = Some(idx);
            return Ok(());
        };

        let top = self.nodes[entry as usize].level();
        let mut ep = vec![Scored {
            sim: dot(&vector, &self.nodes[entry as usize].vector),
            idx: entry,
        }];
        for layer in ((level + 1)..=top).rev() {
            ep = self.search_layer(&vector, &ep, 1, layer);
        }

        let mut links = vec![Vec::new(); level + 1];
        let mut per_layer = Vec::new();
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(&vector, &ep, self.params.ef_construction, layer);
            let chosen: Vec<u32> = found.iter().take(self.params.m).map(|s| s.idx).collect();
            links[layer] = chosen.clone();
            per_layer.push((layer, chosen));
            ep = found;
        }

        self.nodes.push(Node {
            id: item_id.clone(),
            vector,
            payload,
            links,
        });
        self.by_id.insert(item_id, idx);

        for (layer, chosen) in per_layer {
            for n in chosen {
                self.nodes[n as usize].links[layer].push(idx);
                self.prune(n, layer);
            }
        }
        if level > top {
            self.entry = Some(idx);
        }
        Ok(())
    }

    /// Approximate top-`k` by cosine. `ef` is raised to `k` when smaller.
    pub fn search(&self, query: &[f32], k: usize, ef: usize) -> Result<Vec<SearchHit>, VIndexError> {
        if k < 1 {
            return Err(VIndexError::BadK);
        }
        if query.len() != self.dim {
            return Err(VIndexError::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let q = unit(query)?;
        let ep = self.greedy_descend(&q);
        let found = self.search_layer(&q, &ep, ef.max(k), 0);
        // Rescore the candidate set exactly so ranking and ties agree with a
        // brute-force scan.
        let mut hits: Vec<SearchHit> = found
            .into_iter()
            .map(|s| self.hit(query, s.idx))
            .collect::<Result<_, _>>()?;
        sort_hits(&mut hits);
        hits.truncate(k);
        Ok(hits)
    }

    /// Search with the configured `ef_search`.
    pub fn search_default(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, VIndexError> {
        self.search(query, k, self.params.ef_search)
    }

    fn hit(&self, query: &[f32], idx: u32) -> Result<SearchHit, VIndexError> {
        let node = &self.nodes[idx as usize];
        let score = cosine_slices(query, &node.vector).map_err(|_| VIndexError::ZeroVector)?;
        Ok(SearchHit {
            item_id: node.id.clone(),
            score,
            payload: node.payload.clone(),
        })
    }

    /// Exact top-`k` over every stored item, same ordering rules as
    /// [`HnswIndex::search`].
    pub fn brute_force_topk(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, VIndexError> {
        if query.len() != self.dim {
            return Err(VIndexError::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let mut hits: Vec<SearchHit> = (0..self.nodes.len() as u32)
            .map(|i| self.hit(query, i))
            .collect::<Result<_, _>>()?;
        sort_hits(&mut hits);
        hits.truncate(k);
        Ok(hits)
    }
}

/// Exact top-`k` over a plain item list.
pub fn brute_force_topk<'a, I>(items: I, query: &[f32], k: usize) -> Vec<SearchHit>
where
    I: IntoIterator<Item = (&'a str, &'a [f32], &'a Value)>,
{
    let mut hits: Vec<SearchHit> = items
        .into_iter()
        .filter_map(|(id, v, payload)| {
            cosine_slices(query, v).ok().map(|score| SearchHit {
                item_id: id.to_string(),
                score,
                payload: payload.clone(),
            })
        })
        .collect();
    sort_hits(&mut hits);
    hits.truncate(k);
    hits
}
