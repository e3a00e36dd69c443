//! Query resolution for a target page: reuse similar library queries, or
//! expand new ones and keep those that demonstrably surface the page.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::library::{ExemplarId, ExemplarLibrary};
use crate::llm::{GeneratorClient, PromptParts, PromptTask, SECTION_PAGE, SECTION_TASK};
use crate::model::{canonicalize_url, EmbeddingVector, PipelineConfig, ProductPage};
use crate::search::SearchClient;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolutionMode {
    Matched,
    Expanded,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryResolution {
    pub mode: ResolutionMode,
    /// `Q_S(x)`; similarities are present in matched mode.
    pub queries: Vec<(String, Option<f64>)>,
    /// Best library-query similarity before any augmentation; `-inf` for an
    /// empty library.
    pub s_star: f64,
    pub expansion_attempted: bool,
    pub augmented_count: usize,
    #[serde(skip)]
    pub page_embedding: EmbeddingVector,
}

impl QueryResolution {
    pub fn query_texts(&self) -> Vec<&str> {
        self.queries.iter().map(|(q, _)| q.as_str()).collect()
    }

    /// `E(x)` for the resolved queries.
    pub fn pool(&self, lib: &ExemplarLibrary) -> Vec<ExemplarId> {
        lib.exemplars_for_queries(&self.query_texts())
    }
}

pub fn expansion_prompt(page: &ProductPage, n_expand: usize) -> PromptParts {
    let mut p = PromptParts::new(PromptTask::Expand);
    p.push(
        SECTION_TASK,
        format!(
            "List up to {n_expand} distinct search queries a shopper would type to find \
             this product. One query per line, no numbering."
        ),
    );
    p.push(SECTION_PAGE, page.serialize_attributes());
    p
}

/// Asks the generator for candidate queries describing `page`.
///
/// Lines are trimmed, lowercased and deduplicated; at most `n_expand` are kept.
pub fn expand_queries(
    page: &ProductPage,
    llm: &dyn GeneratorClient,
    n_expand: usize,
) -> Result<Vec<String>> {
    let raw = llm.complete(&expansion_prompt(page, n_expand))?;
    let mut out: Vec<String> = Vec::new();
    for line in raw.lines() {
        let q = line
            .trim()
            .trim_start_matches(|c: char| c == '-' || c == '*' || c.is_ascii_digit() || c == '.')
            .trim()
            .to_lowercase();
        if !q.is_empty() && !out.contains(&q) {
            out.push(q);
        }
        if out.len() == n_expand {
            break;
        }
    }
    if out.is_empty() {
        return Err(Error::ExpansionEmpty);
    }
    Ok(out)
}

/// Keeps the queries whose top `k_hit` results contain `target_url`.
pub fn relevance_filter<S: AsRef<str>>(
    queries: &[S],
    target_url: &str,
    search: &dyn SearchClient,
    k_hit: usize,
) -> Result<Vec<String>> {
    if k_hit == 0 {
        return Err(Error::invalid("k_hit must be >= 1"));
    }
    let target = canonicalize_url(target_url);
    let mut kept = Vec::new();
    for q in queries {
        let q = q.as_ref();
        match search.search(q, k_hit) {
            Ok(results) => {
                if results
                    .iter()
                    .take(k_hit)
                    .any(|r| canonicalize_url(&r.url) == target)
                {
                    kept.push(q.to_string());
                }
            }
            Err(e) => log::warn!("dropping query {q:?}: search failed: {e}"),
        }
    }
    Ok(kept)
}

/// Harvests the top `k_aug` results of each query into `lib`, never storing
/// `exclude_url`. Returns how many exemplars were actually added.
pub fn augment_library<S: AsRef<str>>(
    lib: &mut ExemplarLibrary,
    queries: &[S],
    search: &dyn SearchClient,
    k_aug: usize,
    exclude_url: &str,
) -> Result<usize> {
    let mut added = 0;
    for q in queries {
        let q = q.as_ref();
        match search.search(q, k_aug) {
            Ok(results) => added += lib.ingest_results(q, &results, Some(exclude_url))?.added,
            Err(e) => log::warn!("augmentation skipped for {q:?}: {e}"),
        }
    }
    Ok(added)
}

/// Resolves `Q_S(x)` for `page`.
///
/// When the closest library query reaches `tau_q` every query above the
/// threshold is used and the search engine is not contacted. Otherwise new
/// queries are expanded, filtered by whether they retrieve the page, and
/// their results are added to the library.
pub fn resolve_queries(
    page: &ProductPage,
    lib: &mut ExemplarLibrary,
    search: &dyn SearchClient,
    llm: &dyn GeneratorClient,
    cfg: &PipelineConfig,
) -> Result<QueryResolution> {
    let z_x = lib.embedder().embed_page(page)?;
    let s_star = if lib.query_count() == 0 {
        f64::NEG_INFINITY
    } else {
        lib.nearest_query(&z_x)?.1
    };

    if s_star >= cfg.tau_q {
        let queries = lib
            .queries_above(&z_x, cfg.tau_q)?
            .into_iter()
            .map(|(q, s)| (q, Some(s)))
            .collect();
        return Ok(QueryResolution {
            mode: ResolutionMode::Matched,
            queries,
            s_star,
            expansion_attempted: false,
            augmented_count: 0,
            page_embedding: z_x,
        });
    }

    let expanded = match expand_queries(page, llm, cfg.n_expand) {
        Ok(q) => q,
        Err(e) => {
            return Err(Error::NoCoverage {
                reason: format!("expansion failed: {e}"),
                expanded: Vec::new(),
            })
        }
    };
    let filtered = relevance_filter(&expanded, page.url(), search, cfg.k_hit)?;
    if filtered.is_empty() {
        return Err(Error::NoCoverage {
            reason: format!(
                "none of {} expanded queries retrieves {} in the top {}",
                expanded.len(),
                page.url(),
                cfg.k_hit
            ),
            expanded,
        });
    }
    let augmented_count = augment_library(lib, &filtered, search, cfg.k_aug, page.url())?;
    for q in &filtered {
        lib.register_query(q)?;
    }
    Ok(QueryResolution {
        mode: ResolutionMode::Expanded,
        queries: filtered.into_iter().map(|q| (q, None)).collect(),
        s_star,
        expansion_attempted: true,
        augmented_count,
        page_embedding: z_x,
    })
}
