//! Retrieval-augmented generation of search meta titles and descriptions
//! for product pages.
//!
//! A library of exemplar snippets is harvested from search results for seed
//! queries. Each page is matched to library queries (or new queries are
//! expanded and checked against search), a diverse set of exemplars is
//! chosen, and a generator drafts a snippet that is scored and refined until
//! it meets the guardrails.
//!
//! ```
//! use metasynth::{Attribute, EmbeddingProvider, HashingEmbedder, ProductPage};
//!
//! let page = ProductPage::new(
//!     "p1",
//!     "https://shop.example/p1",
//!     vec![Attribute::new("name", "Red Ceramic Mug")],
//! )
//! .unwrap();
//! let z = HashingEmbedder::default().embed_page(&page).unwrap();
//! assert!((z.norm() - 1.0).abs() < 1e-9);
//! ```

pub mod config;
pub mod embedding;
pub mod error;
pub mod fixture;
pub mod generation;
pub mod library;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod retrieval;
pub mod search;
pub mod selection;

pub use config::{load_config, parse_config, LoadedConfig, Settings};
pub use embedding::{EmbeddingProvider, HashingEmbedder, HttpEmbedder, MemoEmbedder};
pub use error::{Error, ErrorCode, Result};
pub use generation::{
    run_loop, EvaluatorPanel, Feedback, RefinementTrace, ScoreVector, StopReason,
};
pub use library::{build_library, BuildReport, ExemplarId, ExemplarLibrary};
pub use llm::{GeneratorClient, HttpChatClient, MockGenerator, PromptParts, ScriptedGenerator};
pub use metrics::{compare_methods, GainKind, JudgedItem, MetricsTable, MockJudge};
pub use model::{
    Attribute, Criterion, EmbeddingVector, Exemplar, Guardrails, PipelineConfig, ProductPage,
    RequiredElement, Snippet,
};
pub use pipeline::{load_pages, MetaSynth, PageOutcome, PageResult, PipelineVariant};
pub use retrieval::{resolve_queries, QueryResolution, ResolutionMode};
pub use search::{HttpSearch, SearchClient, SearchResult, SimulatedCorpusDoc, SimulatedSearch};
pub use selection::{select_exemplars, SelectionResult};
