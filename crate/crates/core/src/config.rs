//! JSON configuration: pipeline parameters, guardrails and client selection.
//!
//! Absent keys take their defaults. Unknown keys are reported as warnings
//! rather than rejected, so a config written for a newer build still loads.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embedding::{EmbeddingProvider, HashingEmbedder, HttpEmbedder, MemoEmbedder};
use crate::error::{Error, Result};
use crate::generation::EvaluatorPanel;
use crate::llm::{lines_of, GeneratorClient, HttpChatClient, HttpChatConfig, MockGenerator};
use crate::llm::{CTA_PHRASES, PROMO_LEXICON};
use crate::metrics::GainKind;
use crate::model::{Guardrails, PipelineConfig};
use crate::search::{HttpSearch, HttpSearchConfig, SearchClient, SimulatedSearch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchSettings {
    /// Deterministic ranker over a JSON-lines corpus; a relative path is
    /// resolved against the config file's directory.
    Simulated { corpus: PathBuf },
    Http(HttpSearchConfig),
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings::Simulated {
            corpus: PathBuf::from("corpus.jsonl"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmSettings {
    #[default]
    Mock,
    Http(HttpChatConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSettings {
    Hashing {
        #[serde(default = "default_seed")]
        seed: u64,
        #[serde(default = "yes")]
        bigrams: bool,
    },
    Http {
        endpoint: String,
        #[serde(default = "default_embed_timeout")]
        timeout_ms: u64,
    },
}

fn default_seed() -> u64 {
    HashingEmbedder::DEFAULT_SEED
}

fn yes() -> bool {
    true
}

fn default_embed_timeout() -> u64 {
    30_000
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings::Hashing {
            seed: default_seed(),
            bigrams: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluatorSettings {
    pub promo_lexicon: Vec<String>,
    pub cta_phrases: Vec<String>,
}

impl Default for EvaluatorSettings {
    fn default() -> Self {
        Self {
            promo_lexicon: lines_of(PROMO_LEXICON),
            cta_phrases: lines_of(CTA_PHRASES),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSettings {
    pub gain: GainKind,
}

/// Everything a run needs, after defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub guardrails: Guardrails,
    pub search: SearchSettings,
    pub llm: LlmSettings,
    pub embedding: EmbeddingSettings,
    pub evaluator: EvaluatorSettings,
    pub metrics: MetricsSettings,
    /// Pages generated concurrently in batch mode.
    pub workers: usize,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            guardrails: Guardrails::default(),
            search: SearchSettings::default(),
            llm: LlmSettings::default(),
            embedding: EmbeddingSettings::default(),
            evaluator: EvaluatorSettings::default(),
            metrics: MetricsSettings::default(),
            workers: 4,
            base_dir: PathBuf::from("."),
        }
    }
}

/// Parsed settings plus the dotted paths of keys that were ignored.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub settings: Settings,
    pub warnings: Vec<String>,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let base = if base.as_os_str().is_empty() {
        Path::new(".")
    } else {
        base
    };
    parse_config(&text, base)
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<LoadedConfig> {
    let raw: Value =
        serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
    if !raw.is_object() {
        return Err(Error::config("<root>", "config must be a JSON object"));
    }
    let mut settings: Settings = serde_json::from_value(raw.clone()).map_err(blame_key)?;
    settings.base_dir = base_dir.to_path_buf();
    settings.validate()?;

    let effective = serde_json::to_value(&settings).expect("settings serialize");
    let mut warnings = Vec::new();
    unknown_keys(&raw, &effective, "", &mut warnings);
    for w in &warnings {
        log::warn!("ignoring unknown config key {w:?}");
    }
    Ok(LoadedConfig { settings, warnings })
}

/// Best effort at naming the key behind a deserialization error.
fn blame_key(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let key = ["guardrails", "search", "llm", "embedding", "evaluator", "metrics"]
        .into_iter()
        .find(|k| msg.contains(k))
        .or_else(|| msg.split('`').nth(1))
        .unwrap_or("<root>")
        .to_string();
    Error::config(key, msg)
}

fn unknown_keys(raw: &Value, effective: &Value, prefix: &str, out: &mut Vec<String>) {
    match (raw, effective) {
        (Value::Object(r), Value::Object(e)) => {
            for (k, v) in r {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                match e.get(k) {
                    None => out.push(path),
                    Some(ev) => unknown_keys(v, ev, &path, out),
                }
            }
        }
        (Value::Array(r), Value::Array(e)) => {
            for (i, (rv, ev)) in r.iter().zip(e).enumerate() {
                unknown_keys(rv, ev, &format!("{prefix}[{i}]"), out);
            }
        }
        _ => {}
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.guardrails.validate()?;
        if self.workers == 0 {
            return Err(Error::config("workers", "must be a positive integer"));
        }
        match &self.search {
            SearchSettings::Http(c) if c.endpoint.is_empty() => {
                return Err(Error::config("search.endpoint", "required for http search"))
            }
            SearchSettings::Http(c) if c.attempts == 0 => {
                return Err(Error::config("search.attempts", "must be >= 1"))
            }
            _ => {}
        }
        if let LlmSettings::Http(c) = &self.llm {
            if c.endpoint.is_empty() {
                return Err(Error::config("llm.endpoint", "required for http llm"));
            }
            if c.max_in_flight == 0 {
                return Err(Error::config("llm.max_in_flight", "must be >= 1"));
            }
        }
        if let EmbeddingSettings::Http { endpoint, .. } = &self.embedding {
            if endpoint.is_empty() {
                return Err(Error::config("embedding.endpoint", "required for http embedding"));
            }
        }
        if self.evaluator.cta_phrases.is_empty() {
            return Err(Error::config("evaluator.cta_phrases", "must not be empty"));
        }
        Ok(())
    }

    /// Pretty JSON of the effective settings.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("settings serialize")
    }

    pub fn build_embedder(&self) -> Result<Arc<dyn EmbeddingProvider>> {
        let d = self.pipeline.dimension;
        Ok(match &self.embedding {
            EmbeddingSettings::Hashing { seed, bigrams } => Arc::new(
                HashingEmbedder::new(d)
                    .with_seed(*seed)
                    .with_bigrams(*bigrams),
            ),
            EmbeddingSettings::Http {
                endpoint,
                timeout_ms,
            } => Arc::new(MemoEmbedder::new(HttpEmbedder::new(
                endpoint.clone(),
                d,
                Duration::from_millis(*timeout_ms),
            )?)),
        })
    }

    pub fn build_search(
        &self,
        embedder: Arc<dyn EmbeddingProvider>,
    ) -> Result<Arc<dyn SearchClient>> {
        Ok(match &self.search {
            SearchSettings::Simulated { corpus } => {
                let path = self.base_dir.join(corpus);
                Arc::new(SimulatedSearch::new(
                    SimulatedSearch::load_corpus(&path)?,
                    embedder,
                )?)
            }
            SearchSettings::Http(c) => Arc::new(HttpSearch::new(c.clone())?),
        })
    }

    pub fn build_llm(&self) -> Result<Arc<dyn GeneratorClient>> {
        Ok(match &self.llm {
            LlmSettings::Mock => Arc::new(MockGenerator::new(
                self.evaluator.promo_lexicon.clone(),
                self.evaluator.cta_phrases.clone(),
            )),
            LlmSettings::Http(c) => Arc::new(HttpChatClient::new(c.clone())?),
        })
    }

    pub fn build_panel(&self, embedder: Arc<dyn EmbeddingProvider>) -> EvaluatorPanel {
        EvaluatorPanel::new(embedder)
            .with_promo_lexicon(self.evaluator.promo_lexicon.clone())
            .with_cta_phrases(self.evaluator.cta_phrases.clone())
    }
}
