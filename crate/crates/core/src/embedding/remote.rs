//! Embeddings over HTTP: `POST {"model", "input": [...]}` answered by
//! `{"data": [{"embedding": [...]}, ...]}`.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{EmbeddingError, EmbeddingProvider};
use crate::http;
use crate::retry::RetryPolicy;

#[derive(Deserialize)]
struct Reply {
    data: Vec<Item>,
}

#[derive(Deserialize)]
struct Item {
    embedding: Vec<f32>,
    #[serde(default)]
    index: Option<usize>,
}

pub struct HttpEmbeddingProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl HttpEmbeddingProvider {
    pub fn new(
        endpoint: String,
        model: String,
        api_key: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            endpoint,
            model,
            api_key,
            agent: http::agent(timeout),
            retry,
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        let body = json!({ "model": self.model, "input": texts });
        let value = http::post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &body, self.retry)
            .map_err(|(reason, attempts)| EmbeddingError::ProviderUnavailable { attempts, reason })?;
        let reply: Reply = serde_json::from_value(value).map_err(|e| EmbeddingError::ProviderUnavailable {
            attempts: 1,
            reason: format!("unexpected reply shape: {e}"),
        })?;
        let mut items = reply.data;
        // Providers may return items out of order when they carry an index.
        if items.iter().all(|i| i.index.is_some()) {
            items.sort_by_key(|i| i.index);
        }
        Ok(items.into_iter().map(|i| i.embedding).collect())
    }
}
