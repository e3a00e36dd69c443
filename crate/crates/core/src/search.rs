//! Search-engine clients: the black-box ranking contract, a deterministic
//! simulated engine, and an HTTP client.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::model::{cosine_unchecked, EmbeddingVector};

/// One ranked search result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    pub description: String,
    pub rank: u32,
}

/// A ranking engine observed only through its outputs.
///
/// Implementations return at most `k` results with ranks `1, 2, ...` in order.
pub trait SearchClient: Send + Sync {
    fn name(&self) -> &str;

    fn max_k(&self) -> usize;

    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>>;
}

impl<S: SearchClient + ?Sized> SearchClient for Arc<S> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn max_k(&self) -> usize {
        (**self).max_k()
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>> {
        (**self).search(query, k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedCorpusDoc {
    pub url: String,
    pub title: String,
    pub description: String,
    #[serde(default)]
    pub popularity: f64,
}

/// Weight of the `ln(1 + popularity)` bonus in the simulated ranker.
pub const POPULARITY_WEIGHT: f64 = 0.01;

/// Ranks a fixed corpus by embedding similarity to the query plus a small
/// popularity bonus. Ties go to the lexicographically smaller URL.
pub struct SimulatedSearch {
    docs: Vec<SimulatedCorpusDoc>,
    doc_embeddings: Vec<EmbeddingVector>,
    embedder: Arc<dyn EmbeddingProvider>,
}

impl SimulatedSearch {
    pub fn new(docs: Vec<SimulatedCorpusDoc>, embedder: Arc<dyn EmbeddingProvider>) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &docs {
            if !seen.insert(d.url.as_str()) {
                return Err(Error::invalid(format!("duplicate corpus url {}", d.url)));
            }
            if !(d.popularity >= 0.0 && d.popularity.is_finite()) {
                return Err(Error::invalid(format!(
                    "corpus doc {} has invalid popularity {}",
                    d.url, d.popularity
                )));
            }
        }
        let doc_embeddings = docs
            .iter()
            .map(|d| embedder.embed_exemplar(&d.title, &d.description))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            docs,
            doc_embeddings,
            embedder,
        })
    }

    /// Reads a JSON-lines corpus file.
    pub fn load_corpus(path: &Path) -> Result<Vec<SimulatedCorpusDoc>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Input {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", i + 1),
                })
            })
            .collect()
    }

    pub fn docs(&self) -> &[SimulatedCorpusDoc] {
        &self.docs
    }

    /// Score of every document for `query`, in corpus order.
    pub fn scores(&self, query: &str) -> Result<Vec<f64>> {
        let q = self.embedder.embed_text(query)?;
        Ok(self
            .docs
            .iter()
            .zip(&self.doc_embeddings)
            .map(|(d, e)| {
                cosine_unchecked(q.values(), e.values())
                    + POPULARITY_WEIGHT * d.popularity.ln_1p()
            })
            .collect())
    }
}

impl SearchClient for SimulatedSearch {
    fn name(&self) -> &str {
        "simulated"
    }

    fn max_k(&self) -> usize {
        usize::MAX
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>> {
        if k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if self.docs.is_empty() {
            return Ok(Vec::new());
        }
        let scores = self.scores(query)?;
        let mut order: Vec<usize> = (0..self.docs.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| self.docs[a].url.cmp(&self.docs[b].url))
        });
        Ok(order
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, idx)| {
                let d = &self.docs[idx];
                SearchResult {
                    url: d.url.clone(),
                    title: d.title.clone(),
                    description: d.description.clone(),
                    rank: i as u32 + 1,
                }
            })
            .collect())
    }
}

/// Connection settings for [`HttpSearch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSearchConfig {
    pub endpoint: String,
    pub query_param: String,
    pub k_param: String,
    pub max_k: usize,
    pub attempts: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
    pub require_key: bool,
}

impl Default for HttpSearchConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            query_param: "q".into(),
            k_param: "k".into(),
            max_k: 100,
            attempts: 3,
            backoff_ms: 250,
            timeout_ms: 10_000,
            require_key: false,
        }
    }
}

#[derive(Deserialize)]
struct RawHit {
    url: String,
    title: String,
    description: String,
    #[serde(default)]
    rank: Option<u32>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawResponse {
    Wrapped { results: Vec<RawHit> },
    Bare(Vec<RawHit>),
}

/// Search over HTTP: `GET endpoint?q=<query>&k=<k>`.
///
/// Non-2xx responses and transport failures are retried with exponential
/// backoff; a body that does not fit the schema fails immediately.
pub struct HttpSearch {
    config: HttpSearchConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpSearch {
    pub const API_KEY_VAR: &'static str = "SEARCH_API_KEY";

    pub fn new(config: HttpSearchConfig) -> Result<Self> {
        let api_key = std::env::var(Self::API_KEY_VAR).ok();
        if config.require_key && api_key.is_none() {
            return Err(Error::config(
                "search.require_key",
                format!("{} is not set", Self::API_KEY_VAR),
            ));
        }
        if config.endpoint.is_empty() {
            return Err(Error::config("search.endpoint", "endpoint is required"));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::SearchTransport(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    fn fetch_once(&self, query: &str, k: usize) -> Result<String> {
        let mut req = self.client.get(&self.config.endpoint).query(&[
            (self.config.query_param.as_str(), query.to_string()),
            (self.config.k_param.as_str(), k.to_string()),
        ]);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| Error::SearchTransport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::SearchTransport(format!("status {status}")));
        }
        resp.text()
            .map_err(|e| Error::SearchTransport(e.to_string()))
    }

    /// Turns a provider body into contract-shaped results.
    pub fn parse_response(body: &str, k: usize) -> Result<Vec<SearchResult>> {
        let raw: RawResponse =
            serde_json::from_str(body).map_err(|e| Error::SearchParse(e.to_string()))?;
        let mut hits = match raw {
            RawResponse::Wrapped { results } => results,
            RawResponse::Bare(v) => v,
        };
        if hits.iter().all(|h| h.rank.is_some()) {
            hits.sort_by_key(|h| h.rank);
        }
        Ok(hits
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, h)| SearchResult {
                url: h.url,
                title: h.title,
                description: h.description,
                rank: i as u32 + 1,
            })
            .collect())
    }
}

impl SearchClient for HttpSearch {
    fn name(&self) -> &str {
        "http"
    }

    fn max_k(&self) -> usize {
        self.config.max_k
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>> {
        if k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        let k = k.min(self.config.max_k);
        let attempts = self.config.attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1));
                thread::sleep(Duration::from_millis(delay));
            }
            match self.fetch_once(query, k) {
                Ok(body) => return Self::parse_response(&body, k),
                Err(e) => {
                    log::warn!("search attempt {} for {query:?} failed: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(last.unwrap_or_else(|| Error::SearchTransport("no attempt made".into())))
    }
}
