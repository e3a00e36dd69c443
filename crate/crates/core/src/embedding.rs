//! Embedding providers.
//!
//! Every provider maps text into one shared unit-norm vector space. Queries,
//! pages and snippets all go through [`EmbeddingProvider::embed_text`]; pages
//! and snippets are first rendered to text in a fixed canonical form.

use std::collections::HashMap;
use std::hash::Hasher;
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;
use twox_hash::XxHash64;

use crate::error::{Error, Result};
use crate::model::{concat_snippet, EmbeddingVector, ProductPage};

pub const DEFAULT_DIMENSION: usize = 256;

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    /// Embeds free text. Must be deterministic and return a unit vector.
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;

    /// Embeds a page via its canonical `name: value` serialization.
    fn embed_page(&self, page: &ProductPage) -> Result<EmbeddingVector> {
        self.embed_text(&page.serialize_attributes())
    }

    /// Embeds a title/description pair joined with the snippet separator.
    fn embed_exemplar(&self, title: &str, description: &str) -> Result<EmbeddingVector> {
        self.embed_text(&concat_snippet(title, description)?)
    }
}

/// Deterministic feature-hashing embedder over word unigrams and bigrams.
///
/// Text is lowercased and split on non-alphanumeric characters. Each feature
/// is hashed with a seeded xxHash64; the low bits pick a bucket and the top
/// bit picks the sign. Counts are accumulated and the result L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
    seed: u64,
    bigrams: bool,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl HashingEmbedder {
    pub const DEFAULT_SEED: u64 = 0x6d65_7461_7379_6e74;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            dimension,
            seed: Self::DEFAULT_SEED,
            bigrams: true,
        }
    }

    #[must_use]
    pub fn with_bigrams(mut self, bigrams: bool) -> Self {
        self.bigrams = bigrams;
        self
    }

    #[must_use]
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn add_feature(&self, acc: &mut [f64], feature: &str) {
        let mut h = XxHash64::with_seed(self.seed);
        h.write(feature.as_bytes());
        let hash = h.finish();
        let bucket = (hash % self.dimension as u64) as usize;
        let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        "hashing"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::invalid("cannot embed empty text"));
        }
        let tokens = tokenize(text);
        let mut acc = vec![0.0; self.dimension];
        for t in &tokens {
            self.add_feature(&mut acc, &format!("u:{t}"));
        }
        if self.bigrams {
            for w in tokens.windows(2) {
                self.add_feature(&mut acc, &format!("b:{} {}", w[0], w[1]));
            }
        }
        if acc.iter().all(|v| *v == 0.0) {
            // No tokens, or every feature cancelled: fall back to the raw text.
            self.add_feature(&mut acc, &format!("t:{}", text.trim().to_lowercase()));
        }
        EmbeddingVector::normalized(acc)
    }
}

/// Wraps a provider with an in-memory memo keyed by input text.
pub struct MemoEmbedder<P> {
    inner: P,
    memo: Mutex<HashMap<String, EmbeddingVector>>,
}

impl<P: EmbeddingProvider> MemoEmbedder<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached(&self) -> usize {
        self.memo.lock().expect("memo poisoned").len()
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for MemoEmbedder<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        if let Some(v) = self.memo.lock().expect("memo poisoned").get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed_text(text)?;
        self.memo
            .lock()
            .expect("memo poisoned")
            .insert(text.to_string(), v.clone());
        Ok(v)
    }
}

/// Remote embedding endpoint accepting `{"input": [texts]}` and answering
/// with one float array per input.
pub struct HttpEmbedder {
    endpoint: String,
    dimension: usize,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    input: &'a [&'a str],
}

impl HttpEmbedder {
    pub const API_KEY_VAR: &'static str = "EMBED_API_KEY";

    pub fn new(endpoint: impl Into<String>, dimension: usize, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Embedding(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            dimension,
            api_key: std::env::var(Self::API_KEY_VAR).ok(),
            client,
        })
    }

    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::invalid("cannot embed empty text"));
        }
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&EmbedRequest { input: texts });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Embedding(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(Error::Embedding(format!("status {}", resp.status())));
        }
        let raw: Vec<Vec<f64>> = resp
            .json()
            .map_err(|e| Error::Embedding(format!("bad response: {e}")))?;
        if raw.len() != texts.len() {
            return Err(Error::Embedding(format!(
                "expected {} vectors, got {}",
                texts.len(),
                raw.len()
            )));
        }
        raw.into_iter()
            .map(|v| {
                if v.len() != self.dimension {
                    return Err(Error::Embedding(format!(
                        "expected dimension {}, got {}",
                        self.dimension,
                        v.len()
                    )));
                }
                EmbeddingVector::normalized(v)
            })
            .collect()
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> &str {
        "http"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        self.embed_batch(&[text])?
            .pop()
            .ok_or_else(|| Error::Embedding("empty response".into()))
    }
}
