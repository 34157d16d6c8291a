//! NCBI E-utilities client: esearch for ids, efetch for records, with
//! review/recency ranking, rate limiting and a TTL cache.

mod parse;
mod throttle;
mod transport;

use std::sync::Arc;
use std::time::Duration;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retry::{Attempt, RetryPolicy};

pub use parse::{parse_efetch, parse_esearch};
pub use throttle::{Clock, MockClock, RateLimiter, SystemClock, TtlCache};
pub use transport::{CannedTransport, HttpTransport, Reply, Transport};

pub const DEFAULT_BASE_URL: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
/// esearch asks for this many times `max_results` so ranking has room to work.
pub const OVERSAMPLE: usize = 3;
pub const EFETCH_BATCH: usize = 50;
pub const CACHE_TTL: Duration = Duration::from_secs(15 * 60);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PubmedError {
    #[error("invalid literature query: {0}")]
    InvalidQuery(String),
    #[error("literature transport failed after {attempts} attempt(s): {reason}")]
    Transport { attempts: u32, reason: String },
    #[error("literature API kept rate limiting after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("could not parse literature response: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LitQuery {
    pub term: String,
    pub max_results: usize,
    pub years_back: u32,
    pub prefer_reviews: bool,
}

impl LitQuery {
    pub fn new(term: impl Into<String>) -> Self {
        Self {
            term: term.into(),
            max_results: 3,
            years_back: 5,
            prefer_reviews: true,
        }
    }

    pub fn validate(&self) -> Result<(), PubmedError> {
        if self.term.trim().is_empty() {
            return Err(PubmedError::InvalidQuery("term is empty".into()));
        }
        if self.max_results < 1 {
            return Err(PubmedError::InvalidQuery("max_results must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub pmid: String,
    pub title: String,
    pub authors: Vec<String>,
    pub journal: String,
    pub year: i32,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub is_review: bool,
    pub url: String,
}

pub fn article_url(pmid: &str) -> String {
    format!("https://pubmed.ncbi.nlm.nih.gov/{pmid}/")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PubmedConfig {
    pub base_url: String,
    pub api_key: Option<String>,
}

impl Default for PubmedConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.into(),
            api_key: None,
        }
    }
}

impl PubmedConfig {
    /// Reads `NCBI_API_KEY` and `NCBI_BASE_URL`.
    pub fn from_env() -> Self {
        let nonempty = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        Self {
            base_url: nonempty("NCBI_BASE_URL").unwrap_or_else(|| DEFAULT_BASE_URL.into()),
            api_key: nonempty("NCBI_API_KEY"),
        }
    }
}

/// An E-utilities GET: endpoint plus ordered query parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub endpoint: String,
    pub params: Vec<(String, String)>,
}

fn encode(s: &str) -> String {
    // form encoding writes spaces as '+'; literal '+' is already %2B.
    url::form_urlencoded::byte_serialize(s.as_bytes())
        .collect::<String>()
        .replace('+', "%20")
}

impl Request {
    pub fn param(&self, name: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn url(&self) -> String {
        let query: Vec<String> = self
            .params
            .iter()
            .map(|(k, v)| format!("{}={}", encode(k), encode(v)))
            .collect();
        format!("{}?{}", self.endpoint, query.join("&"))
    }
}

fn endpoint(config: &PubmedConfig, tool: &str) -> String {
    format!("{}/{tool}", config.base_url.trim_end_matches('/'))
}

/// The search term actually sent. Review preference is a soft OR-clause:
/// it widens the candidate pool and ranking does the prioritizing.
pub fn effective_term(q: &LitQuery) -> String {
    if q.prefer_reviews {
        format!("({}) AND (systematic review[pt] OR review[pt] OR all[sb])", q.term.trim())
    } else {
        q.term.trim().to_string()
    }
}

/// `[today - years_back years, today]`. Feb 29 clamps to Feb 28.
pub fn date_window(today: NaiveDate, years_back: u32) -> (NaiveDate, NaiveDate) {
    let start = today
        .checked_sub_months(Months::new(years_back.saturating_mul(12)))
        .unwrap_or(NaiveDate::MIN);
    (start, today)
}

pub fn build_search_request(q: &LitQuery, today: NaiveDate, config: &PubmedConfig) -> Request {
    let (from, to) = date_window(today, q.years_back);
    let mut params: Vec<(String, String)> = [
        ("db", "pubmed".to_string()),
        ("term", effective_term(q)),
        ("retmax", (q.max_results * OVERSAMPLE).to_string()),
        ("retmode", "json".to_string()),
        ("datetype", "pdat".to_string()),
        ("mindate", from.format("%Y/%m/%d").to_string()),
        ("maxdate", to.format("%Y/%m/%d").to_string()),
        ("sort", "relevance".to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    if let Some(key) = &config.api_key {
        params.push(("api_key".into(), key.clone()));
    }
    Request {
        endpoint: endpoint(config, "esearch.fcgi"),
        params,
    }
}

pub fn build_fetch_request(pmids: &[String], config: &PubmedConfig) -> Request {
    let mut params = vec![
        ("db".to_string(), "pubmed".to_string()),
        ("id".to_string(), pmids.join(",")),
        ("retmode".to_string(), "xml".to_string()),
    ];
    if let Some(key) = &config.api_key {
        params.push(("api_key".into(), key.clone()));
    }
    Request {
        endpoint: endpoint(config, "efetch.fcgi"),
        params,
    }
}

/// Reviews first, then newer first; original order breaks ties.
pub fn rank_articles(mut articles: Vec<Article>, q: &LitQuery) -> Vec<Article> {
    articles.sort_by(|a, b| b.is_review.cmp(&a.is_review).then(b.year.cmp(&a.year)));
    articles.truncate(q.max_results);
    articles
}

/// Anything that can answer a literature query. The orchestrator depends on
/// this rather than on the concrete client.
pub trait LiteratureSource: Send + Sync {
    fn search_literature(&self, q: &LitQuery) -> Result<Vec<Article>, PubmedError>;
}

pub struct PubmedClient {
    config: PubmedConfig,
    transport: Box<dyn Transport>,
    limiter: RateLimiter,
    cache: TtlCache<LitQuery, Vec<Article>>,
    retry: RetryPolicy,
    today: Box<dyn Fn() -> NaiveDate + Send + Sync>,
}

impl PubmedClient {
    pub fn new(config: PubmedConfig, transport: Box<dyn Transport>) -> Self {
        Self::with_clock(config, transport, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(config: PubmedConfig, transport: Box<dyn Transport>, clock: Arc<dyn Clock>) -> Self {
        let limiter = RateLimiter::for_ncbi(config.api_key.is_some(), clock.clone());
        Self {
            config,
            transport,
            limiter,
            cache: TtlCache::new(CACHE_TTL, clock),
            retry: RetryPolicy::default(),
            today: Box::new(|| chrono::Utc::now().date_naive()),
        }
    }

    /// Live client from environment configuration.
    pub fn from_env() -> Self {
        Self::new(PubmedConfig::from_env(), Box::new(HttpTransport::default()))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_today(mut self, today: NaiveDate) -> Self {
        self.today = Box::new(move || today);
        self
    }

    pub fn config(&self) -> &PubmedConfig {
        &self.config
    }

    fn get(&self, request: &Request) -> Result<String, PubmedError> {
        let url = request.url();
        let mut throttled = false;
        let result = self.retry.run(|attempt| {
            self.limiter.acquire();
            tracing::debug!(attempt, endpoint = %request.endpoint, "literature request");
            let reply = self.transport.get(&url).map_err(|e| {
                throttled = false;
                Attempt::Transient(e)
            })?;
            throttled = reply.status == 429;
            match reply.status {
                200..=299 => Ok(reply.body),
                429 => Err(Attempt::Transient("HTTP 429".to_string())),
                s if s >= 500 => Err(Attempt::Transient(format!("HTTP {s}"))),
                s => Err(Attempt::Fatal(format!("HTTP {s}: {}", reply.body.trim()))),
            }
        });
        result.map_err(|(reason, attempts)| {
            if throttled {
                PubmedError::RateLimited { attempts }
            } else {
                PubmedError::Transport { attempts, reason }
            }
        })
    }

    /// esearch: matching pmids in the order returned.
    pub fn search(&self, q: &LitQuery) -> Result<Vec<String>, PubmedError> {
        q.validate()?;
        let request = build_search_request(q, (self.today)(), &self.config);
        parse_esearch(&self.get(&request)?)
    }

    /// efetch in batches of at most 50 ids.
    pub fn fetch_articles(&self, pmids: &[String]) -> Result<Vec<Article>, PubmedError> {
        let mut out = Vec::with_capacity(pmids.len());
        for batch in pmids.chunks(EFETCH_BATCH) {
            let body = self.get(&build_fetch_request(batch, &self.config))?;
            out.extend(parse_efetch(&body)?);
        }
        Ok(out)
    }

    /// Cached search, fetch and rank.
    pub fn search_articles(&self, q: &LitQuery) -> Result<Vec<Article>, PubmedError> {
        q.validate()?;
        if let Some(hit) = self.cache.get(q) {
            tracing::debug!(term = %q.term, "literature cache hit");
            return Ok(hit);
        }
        let pmids = self.search(q)?;
        let articles = if pmids.is_empty() {
            Vec::new()
        } else {
            rank_articles(self.fetch_articles(&pmids)?, q)
        };
        self.cache.insert(q.clone(), articles.clone());
        Ok(articles)
    }
}

impl LiteratureSource for PubmedClient {
    fn search_literature(&self, q: &LitQuery) -> Result<Vec<Article>, PubmedError> {
        self.search_articles(q)
    }
}
