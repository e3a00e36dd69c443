//! End-to-end orchestration: resolve queries, select exemplars, generate and
//! refine, for one page or a batch.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Settings;
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::generation::{run_loop, EvaluatorPanel, RefinementTrace, ScoreVector, StopReason};
use crate::library::{ExemplarId, ExemplarLibrary};
use crate::llm::GeneratorClient;
use crate::model::{Exemplar, Guardrails, PipelineConfig, ProductPage, Snippet};
use crate::retrieval::{resolve_queries, QueryResolution, ResolutionMode};
use crate::search::SearchClient;
use crate::selection::{select_exemplars, SelectionResult};

/// Which stages run. Disabling evaluation keeps only the first draft.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineVariant {
    pub use_retrieval: bool,
    pub use_evaluation: bool,
}

impl PipelineVariant {
    pub const FULL: Self = Self {
        use_retrieval: true,
        use_evaluation: true,
    };
    pub const NO_RETRIEVAL: Self = Self {
        use_retrieval: false,
        use_evaluation: true,
    };
    pub const NO_EVALUATION: Self = Self {
        use_retrieval: true,
        use_evaluation: false,
    };

    pub fn name(self) -> &'static str {
        match (self.use_retrieval, self.use_evaluation) {
            (true, true) => "full",
            (false, true) => "no_retrieval",
            (true, false) => "no_evaluation",
            (false, false) => "zero_shot",
        }
    }
}

impl Default for PipelineVariant {
    fn default() -> Self {
        Self::FULL
    }
}

/// Everything produced for one page.
#[derive(Debug, Clone)]
pub struct PageOutcome {
    pub page_id: String,
    pub resolution: Option<QueryResolution>,
    /// Set when retrieval found no coverage and generation ran zero-shot.
    pub fallback: Option<String>,
    pub selection: SelectionResult,
    pub exemplars: Vec<Exemplar>,
    pub trace: RefinementTrace,
}

/// The per-page result file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PageResult {
    pub page_id: String,
    pub snippet: Snippet,
    pub stop_reason: StopReason,
    pub accepted: bool,
    pub iterations: usize,
    pub generator_calls: usize,
    pub mode: &'static str,
    pub queries_used: Vec<String>,
    pub exemplars_used: Vec<String>,
    pub scores: ScoreVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl PageOutcome {
    pub fn accepted(&self) -> bool {
        self.trace.accepted()
    }

    pub fn snippet(&self) -> &Snippet {
        self.trace.final_snippet()
    }

    pub fn mode(&self) -> &'static str {
        match self.resolution.as_ref().map(|r| r.mode) {
            Some(ResolutionMode::Matched) => "matched",
            Some(ResolutionMode::Expanded) => "expanded",
            None => "zero_shot",
        }
    }

    pub fn to_result(&self) -> PageResult {
        let last = self.trace.final_iteration();
        PageResult {
            page_id: self.page_id.clone(),
            snippet: last.snippet.clone(),
            stop_reason: self.trace.stop_reason,
            accepted: self.accepted(),
            iterations: self.trace.iterations.len(),
            generator_calls: self.trace.generator_calls,
            mode: self.mode(),
            queries_used: self
                .resolution
                .as_ref()
                .map(|r| r.queries.iter().map(|(q, _)| q.clone()).collect())
                .unwrap_or_default(),
            exemplars_used: self.exemplars.iter().map(|e| e.url.clone()).collect(),
            scores: last.scores.clone(),
            note: self.fallback.clone().or_else(|| self.trace.error.clone()),
        }
    }
}

/// Outcome of a batch, in page order.
#[derive(Debug)]
pub struct BatchReport {
    pub pages: Vec<(String, Result<PageOutcome>)>,
    /// Exemplars the batch added to the library.
    pub library_added: usize,
    pub library_queries_added: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchStatus {
    AllOk,
    Partial,
    TotalFailure,
}

impl BatchReport {
    pub fn failures(&self) -> usize {
        self.pages.iter().filter(|(_, r)| r.is_err()).count()
    }

    pub fn accepted(&self) -> usize {
        self.pages
            .iter()
            .filter(|(_, r)| r.as_ref().is_ok_and(|o| o.accepted()))
            .count()
    }

    pub fn status(&self) -> BatchStatus {
        match self.failures() {
            0 => BatchStatus::AllOk,
            n if n == self.pages.len() => BatchStatus::TotalFailure,
            _ => BatchStatus::Partial,
        }
    }
}

pub struct MetaSynth {
    pub cfg: PipelineConfig,
    pub guardrails: Guardrails,
    pub search: Arc<dyn SearchClient>,
    pub llm: Arc<dyn GeneratorClient>,
    pub panel: EvaluatorPanel,
    pub variant: PipelineVariant,
}

impl MetaSynth {
    pub fn new(
        cfg: PipelineConfig,
        guardrails: Guardrails,
        search: Arc<dyn SearchClient>,
        llm: Arc<dyn GeneratorClient>,
        panel: EvaluatorPanel,
    ) -> Self {
        Self {
            cfg,
            guardrails,
            search,
            llm,
            panel,
            variant: PipelineVariant::FULL,
        }
    }

    /// Builds every client the settings describe. The embedder is returned
    /// too, for loading or creating the library.
    pub fn from_settings(settings: &Settings) -> Result<(Self, Arc<dyn EmbeddingProvider>)> {
        let embedder = settings.build_embedder()?;
        let search = settings.build_search(embedder.clone())?;
        let llm = settings.build_llm()?;
        let panel = settings.build_panel(embedder.clone());
        Ok((
            Self::new(
                settings.pipeline.clone(),
                settings.guardrails.clone(),
                search,
                llm,
                panel,
            ),
            embedder,
        ))
    }

    pub fn with_variant(mut self, variant: PipelineVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn generate_page(&self, page: &ProductPage, lib: &mut ExemplarLibrary) -> Result<PageOutcome> {
        let mut resolution = None;
        let mut fallback = None;
        let mut selection = SelectionResult {
            selected: Vec::new(),
            scores: Vec::new(),
            lambda: self.cfg.lambda,
            gamma: self.cfg.gamma,
        };
        if self.variant.use_retrieval {
            match resolve_queries(page, lib, &*self.search, &*self.llm, &self.cfg) {
                Ok(res) => {
                    let ids = res.pool(lib);
                    let pool: Vec<(ExemplarId, &Exemplar)> = ids
                        .iter()
                        .filter_map(|&id| lib.get(id).map(|e| (id, e)))
                        .collect();
                    selection = select_exemplars(&pool, &res.page_embedding, &self.cfg);
                    resolution = Some(res);
                }
                Err(Error::NoCoverage { reason, .. }) => {
                    log::info!("page {}: {reason}; generating without exemplars", page.page_id());
                    fallback = Some(format!("no coverage: {reason}"));
                }
                Err(e) => return Err(e),
            }
        }
        let exemplars: Vec<Exemplar> = selection
            .selected
            .iter()
            .filter_map(|&id| lib.get(id).cloned())
            .collect();
        let refs: Vec<&Exemplar> = exemplars.iter().collect();

        let mut cfg = self.cfg.clone();
        if !self.variant.use_evaluation {
            cfg.k_max = 1;
        }
        let trace = run_loop(page, &refs, &self.guardrails, &cfg, &*self.llm, &self.panel)?;
        Ok(PageOutcome {
            page_id: page.page_id().to_string(),
            resolution,
            fallback,
            selection,
            exemplars,
            trace,
        })
    }

    /// Generates every page with `workers` threads.
    ///
    /// Each page resolves against its own copy of the library as it stood
    /// before the batch; additions are then replayed into `lib` in page
    /// order, so the result does not depend on scheduling.
    pub fn run_batch(
        &self,
        pages: &[ProductPage],
        lib: &mut ExemplarLibrary,
        workers: usize,
    ) -> Result<BatchReport> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
        let snapshot: &ExemplarLibrary = lib;
        let base_len = snapshot.len();
        let runs: Vec<_> = pool.install(|| {
            pages
                .par_iter()
                .map(|page| {
                    let mut local = snapshot.clone();
                    let outcome = self.generate_page(page, &mut local);
                    let new_exemplars = local.exemplars()[base_len..].to_vec();
                    let new_queries: Vec<String> = local
                        .queries()
                        .filter(|q| !snapshot.has_query(q))
                        .map(str::to_string)
                        .collect();
                    (page.page_id().to_string(), outcome, new_exemplars, new_queries)
                })
                .collect()
        });

        let queries_before = lib.query_count();
        let mut library_added = 0;
        let mut out = Vec::with_capacity(runs.len());
        for (id, outcome, new_exemplars, new_queries) in runs {
            for e in new_exemplars {
                if lib.add_exemplar(e)?.is_added() {
                    library_added += 1;
                }
            }
            for q in &new_queries {
                lib.register_query(q)?;
            }
            out.push((id, outcome));
        }
        Ok(BatchReport {
            pages: out,
            library_added,
            library_queries_added: lib.query_count() - queries_before,
        })
    }
}

/// Reads pages from a JSON-lines file, or from every `.json`/`.jsonl` file
/// in a directory (sorted by file name).
pub fn load_pages(path: &std::path::Path) -> Result<Vec<ProductPage>> {
    let files = if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .is_some_and(|x| x == "json" || x == "jsonl")
            })
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut pages = Vec::new();
    for file in files {
        let text = std::fs::read_to_string(&file).map_err(|e| Error::Input {
            path: file.clone(),
            message: e.to_string(),
        })?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let page = serde_json::from_str(line).map_err(|e| Error::Input {
                path: file.clone(),
                message: format!("line {}: {e}", i + 1),
            })?;
            pages.push(page);
        }
    }
    Ok(pages)
}
