//! Dense text embeddings: a configurable remote provider, a deterministic
//! hashed-trigram embedder for offline use, and cosine similarity.

mod hashing;
mod remote;

use std::env;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hashing::deterministic_embed;
pub use remote::HttpEmbeddingProvider;

use crate::retry::RetryPolicy;

/// Embedding width used by the deployed model.
pub const DEFAULT_DIM: usize = 1024;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("text is empty")]
    EmptyText,
    #[error("no texts to embed")]
    NoInput,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("vector contains a non-finite component")]
    NonFinite,
    #[error("embedding provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { attempts: u32, reason: String },
    #[error("provider returned {actual} embeddings for {expected} inputs")]
    CountMismatch { expected: usize, actual: usize },
    #[error("invalid embedder configuration: {0}")]
    Config(String),
}

/// A dense vector. Components are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f32>,
}

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self { values })
    }

    /// Unit-length copy of `values`.
    pub fn normalized(values: Vec<f32>) -> Result<Self, EmbeddingError> {
        let mut e = Self::new(values)?;
        e.normalize()?;
        Ok(e)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }

    pub fn normalize(&mut self) -> Result<(), EmbeddingError> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroVector);
        }
        for v in &mut self.values {
            *v = (f64::from(*v) / norm) as f32;
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f32) -> Result<Self, EmbeddingError> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }
}

/// `(a·b)/(‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, EmbeddingError> {
    cosine_slices(a.values(), b.values())
}

pub fn cosine_slices(a: &[f32], b: &[f32]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    // sqrt(n*n) == n exactly, so a vector compared with itself scores exactly 1.
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    RemoteHttp,
    DeterministicLocal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub provider: ProviderKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub dim: usize,
    pub timeout_ms: u64,
    pub batch_size: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::DeterministicLocal,
            endpoint: None,
            model_name: None,
            api_key: None,
            dim: DEFAULT_DIM,
            timeout_ms: 30_000,
            batch_size: 32,
        }
    }
}

impl EmbedderConfig {
    /// Remote provider when `EMBED_ENDPOINT` is set, deterministic otherwise.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(endpoint) = env::var("EMBED_ENDPOINT") {
            if !endpoint.trim().is_empty() {
                cfg.provider = ProviderKind::RemoteHttp;
                cfg.endpoint = Some(endpoint);
                cfg.model_name = env::var("EMBED_MODEL").ok();
                cfg.api_key = env::var("EMBED_API_KEY").ok();
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dim == 0 {
            return Err(EmbeddingError::Config("dim must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(EmbeddingError::Config("batch_size must be at least 1".into()));
        }
        if self.provider == ProviderKind::RemoteHttp {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(EmbeddingError::Config("remote provider needs an endpoint".into()));
            }
            if self.model_name.as_deref().is_none_or(str::is_empty) {
                return Err(EmbeddingError::Config("remote provider needs a model name".into()));
            }
        }
        Ok(())
    }
}

/// Raw vector source. Implementations may return unnormalized vectors of any
/// length; [`EmbeddingClient`] validates and normalizes.
pub trait EmbeddingProvider: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError>;
}

/// Hashed-trigram embedder.
#[derive(Debug, Clone, Copy)]
pub struct DeterministicProvider {
    pub dim: usize,
}

impl EmbeddingProvider for DeterministicProvider {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        texts
            .iter()
            .map(|t| deterministic_embed(t, self.dim).map(Embedding::into_values))
            .collect()
    }
}

/// Validating, batching front end over a provider.
pub struct EmbeddingClient {
    provider: Box<dyn EmbeddingProvider>,
    dim: usize,
    batch_size: usize,
}

impl std::fmt::Debug for EmbeddingClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingClient")
            .field("dim", &self.dim)
            .field("batch_size", &self.batch_size)
            .finish_non_exhaustive()
    }
}

impl EmbeddingClient {
    pub fn from_config(cfg: &EmbedderConfig) -> Result<Self, EmbeddingError> {
        cfg.validate()?;
        let provider: Box<dyn EmbeddingProvider> = match cfg.provider {
            ProviderKind::DeterministicLocal => Box::new(DeterministicProvider { dim: cfg.dim }),
            ProviderKind::RemoteHttp => Box::new(HttpEmbeddingProvider::new(
                cfg.endpoint.clone().unwrap_or_default(),
                cfg.model_name.clone().unwrap_or_default(),
                cfg.api_key.clone(),
                Duration::from_millis(cfg.timeout_ms),
                RetryPolicy::default(),
            )),
        };
        Ok(Self {
            provider,
            dim: cfg.dim,
            batch_size: cfg.batch_size,
        })
    }

    pub fn deterministic(dim: usize) -> Self {
        Self::with_provider(Box::new(DeterministicProvider { dim }), dim, 64)
    }

    pub fn with_provider(provider: Box<dyn EmbeddingProvider>, dim: usize, batch_size: usize) -> Self {
        Self {
            provider,
            dim,
            batch_size: batch_size.max(1),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One unit-normalized embedding per input, in input order.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::NoInput);
        }
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            let raw = self.provider.embed_batch(batch)?;
            if raw.len() != batch.len() {
                return Err(EmbeddingError::CountMismatch {
                    expected: batch.len(),
                    actual: raw.len(),
                });
            }
            for values in raw {
                if values.len() != self.dim {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: self.dim,
                        actual: values.len(),
                    });
                }
                out.push(Embedding::normalized(values)?);
            }
        }
        Ok(out)
    }

    pub fn embed_one(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let mut v = self.embed_texts(&[text.to_string()])?;
        Ok(v.remove(0))
    }
}
