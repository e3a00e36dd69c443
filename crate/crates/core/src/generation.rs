//! Snippet generation and the evaluate / consolidate / refine loop.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::embedding::{tokenize, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::llm::{
    contains_phrase, format_completion, lines_of, parse_completion, GeneratorClient, PromptParts,
    PromptTask, CTA_PHRASES, PROMO_LEXICON, SECTION_DIRECTIVES, SECTION_EXEMPLARS,
    SECTION_FORMAT, SECTION_GUARDRAILS, SECTION_PAGE, SECTION_PREVIOUS, SECTION_TASK,
};
use crate::model::{
    check_required_elements, cosine_similarity, scan_hard_constraints, Criterion, Exemplar,
    Guardrails, PipelineConfig, ProductPage, Snippet, Violation,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub rel: f64,
    pub promo: f64,
    pub cta: f64,
    pub brand: f64,
    pub hard_violations: Vec<Violation>,
    pub missing_required: Vec<String>,
}

impl ScoreVector {
    pub fn get(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Rel => self.rel,
            Criterion::Promo => self.promo,
            Criterion::Cta => self.cta,
            Criterion::Brand => self.brand,
        }
    }

    /// Unweighted mean of the four criterion scores.
    pub fn aggregate(&self) -> f64 {
        (self.rel + self.promo + self.cta + self.brand) / 4.0
    }

    pub fn failing(&self, guardrails: &Guardrails) -> Vec<Criterion> {
        Criterion::ALL
            .into_iter()
            .filter(|c| self.get(*c) < guardrails.threshold(*c))
            .collect()
    }

    /// Every threshold met, no hard violation, nothing required missing.
    pub fn is_acceptable(&self, guardrails: &Guardrails) -> bool {
        self.hard_violations.is_empty()
            && self.missing_required.is_empty()
            && self.failing(guardrails).is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Directive {
    pub criterion: Criterion,
    pub text: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Feedback {
    pub directives: Vec<Directive>,
    pub consolidated: Vec<String>,
}

impl Feedback {
    pub fn is_empty(&self) -> bool {
        self.directives.is_empty()
    }
}

/// A pluggable scorer for one criterion, e.g. an LLM judge. Must return a
/// value in `[0, 1]`.
pub trait CriterionScorer: Send + Sync {
    fn score(&self, snippet: &Snippet, page: &ProductPage, guardrails: &Guardrails) -> Result<f64>;
}

/// The evaluator panel: built-in deterministic scorers, individually
/// replaceable.
#[derive(Clone)]
pub struct EvaluatorPanel {
    embedder: Arc<dyn EmbeddingProvider>,
    promo_lexicon: Vec<String>,
    cta_phrases: Vec<String>,
    overrides: BTreeMap<Criterion, Arc<dyn CriterionScorer>>,
}

/// Distinct promotional terms needed for a full promo score.
pub const PROMO_SATURATION: f64 = 3.0;

impl EvaluatorPanel {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Self {
            embedder,
            promo_lexicon: lines_of(PROMO_LEXICON),
            cta_phrases: lines_of(CTA_PHRASES),
            overrides: BTreeMap::new(),
        }
    }

    #[must_use]
    pub fn with_promo_lexicon(mut self, lexicon: Vec<String>) -> Self {
        self.promo_lexicon = lexicon.into_iter().map(|s| s.to_lowercase()).collect();
        self
    }

    #[must_use]
    pub fn with_cta_phrases(mut self, phrases: Vec<String>) -> Self {
        self.cta_phrases = phrases.into_iter().map(|s| s.to_lowercase()).collect();
        self
    }

    #[must_use]
    pub fn with_scorer(mut self, criterion: Criterion, scorer: Arc<dyn CriterionScorer>) -> Self {
        self.overrides.insert(criterion, scorer);
        self
    }

    pub fn promo_lexicon(&self) -> &[String] {
        &self.promo_lexicon
    }

    pub fn cta_phrases(&self) -> &[String] {
        &self.cta_phrases
    }

    /// Cosine between snippet and page embeddings, clamped to `[0, 1]`.
    pub fn score_relevance(&self, snippet: &Snippet, page: &ProductPage) -> Result<f64> {
        let s = self
            .embedder
            .embed_exemplar(snippet.title(), snippet.description())?;
        let p = self.embedder.embed_page(page)?;
        Ok(clamp01(cosine_similarity(&s, &p)?))
    }

    /// Distinct lexicon terms present, divided by three, capped at 1.
    pub fn score_promo(&self, snippet: &Snippet) -> f64 {
        let tokens = tokenize(&snippet.joined());
        let hits = self
            .promo_lexicon
            .iter()
            .filter(|t| contains_phrase(&tokens, t))
            .count();
        clamp01(hits as f64 / PROMO_SATURATION)
    }

    /// 1 if any call-to-action phrase occurs in the title or description.
    pub fn score_cta(&self, snippet: &Snippet) -> f64 {
        let tokens = tokenize(&snippet.joined());
        if self.cta_phrases.iter().any(|p| contains_phrase(&tokens, p)) {
            1.0
        } else {
            0.0
        }
    }

    /// `1 - (violated prohibitions + missing required) / (|H| + |R|)`.
    pub fn score_brand(
        &self,
        snippet: &Snippet,
        guardrails: &Guardrails,
    ) -> (f64, Vec<Violation>, Vec<String>) {
        let violations = scan_hard_constraints(&snippet.joined(), guardrails);
        let missing = check_required_elements(snippet, guardrails);
        (
            brand_score(&violations, &missing, guardrails),
            violations,
            missing,
        )
    }

    fn run_override(
        &self,
        c: Criterion,
        snippet: &Snippet,
        page: &ProductPage,
        guardrails: &Guardrails,
    ) -> Option<Result<f64>> {
        self.overrides.get(&c).map(|s| {
            s.score(snippet, page, guardrails).and_then(|v| {
                if (0.0..=1.0).contains(&v) {
                    Ok(v)
                } else {
                    Err(Error::invalid(format!("{c} scorer returned {v}")))
                }
            })
        })
    }

    /// Scores `snippet` and derives one or more directives per failing criterion.
    pub fn evaluate(
        &self,
        snippet: &Snippet,
        page: &ProductPage,
        guardrails: &Guardrails,
    ) -> (ScoreVector, Feedback) {
        let (builtin_brand, hard_violations, missing_required) =
            self.score_brand(snippet, guardrails);
        let mut errored = Vec::new();
        let mut score = |c: Criterion, builtin: &dyn Fn() -> Result<f64>| {
            let r = self
                .run_override(c, snippet, page, guardrails)
                .unwrap_or_else(builtin);
            r.unwrap_or_else(|e| {
                log::warn!("{c} scorer failed: {e}");
                errored.push(c);
                0.0
            })
        };
        let rel = score(Criterion::Rel, &|| self.score_relevance(snippet, page));
        let promo = score(Criterion::Promo, &|| Ok(self.score_promo(snippet)));
        let cta = score(Criterion::Cta, &|| Ok(self.score_cta(snippet)));
        let brand = score(Criterion::Brand, &|| Ok(builtin_brand));
        let scores = ScoreVector {
            rel,
            promo,
            cta,
            brand,
            hard_violations,
            missing_required,
        };

        let mut directives = Vec::new();
        let mut push = |criterion, severity, text: String| {
            directives.push(Directive {
                criterion,
                text,
                severity,
            })
        };
        let mut seen_phrases = Vec::new();
        for v in &scores.hard_violations {
            if !seen_phrases.contains(&v.phrase) {
                seen_phrases.push(v.phrase.clone());
                push(
                    Criterion::Brand,
                    Severity::Hard,
                    format!("remove forbidden term {}", v.phrase),
                );
            }
        }
        for name in &scores.missing_required {
            push(
                Criterion::Brand,
                Severity::Hard,
                format!("include required element {name}"),
            );
        }
        for c in scores.failing(guardrails) {
            if errored.contains(&c) {
                push(c, Severity::Soft, format!("retry criterion {c}"));
                continue;
            }
            match c {
                Criterion::Rel => push(
                    c,
                    Severity::Soft,
                    format!("increase relevance: mention {}", missing_attribute(snippet, page)),
                ),
                Criterion::Promo => {
                    push(c, Severity::Soft, "increase promotional strength".into())
                }
                Criterion::Cta => push(c, Severity::Soft, "insert a call to action".into()),
                Criterion::Brand => {
                    if scores.hard_violations.is_empty() && scores.missing_required.is_empty() {
                        push(c, Severity::Soft, "improve brand compliance".into());
                    }
                }
            }
        }
        let consolidated = consolidate_feedback(&directives, &scores, guardrails);
        (
            scores,
            Feedback {
                directives,
                consolidated,
            },
        )
    }
}

fn brand_score(violations: &[Violation], missing: &[String], guardrails: &Guardrails) -> f64 {
    let rules = guardrails.rule_count();
    if rules == 0 {
        return 1.0;
    }
    let mut distinct: Vec<&str> = violations.iter().map(|v| v.phrase.as_str()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    clamp01(1.0 - (distinct.len() + missing.len()) as f64 / rules as f64)
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// First page attribute value (source order) not fully covered by the snippet.
fn missing_attribute(snippet: &Snippet, page: &ProductPage) -> String {
    let tokens = tokenize(&snippet.joined());
    page.attributes()
        .iter()
        .find(|a| {
            let value = tokenize(&a.value);
            !value.is_empty() && !value.iter().all(|t| tokens.contains(t))
        })
        .or_else(|| page.attributes().iter().find(|a| !a.value.trim().is_empty()))
        .map(|a| a.value.trim().to_string())
        .unwrap_or_default()
}

/// Orders directives hard-first, then by threshold shortfall (largest first),
/// then brand, rel, cta, promo; identical directive texts are kept once.
pub fn consolidate_feedback(
    directives: &[Directive],
    scores: &ScoreVector,
    guardrails: &Guardrails,
) -> Vec<String> {
    let shortfall = |c: Criterion| guardrails.threshold(c) - scores.get(c);
    let mut ordered: Vec<&Directive> = directives.iter().collect();
    ordered.sort_by(|a, b| {
        a.severity
            .cmp(&b.severity)
            .then_with(|| shortfall(b.criterion).total_cmp(&shortfall(a.criterion)))
            .then_with(|| a.criterion.consolidation_order().cmp(&b.criterion.consolidation_order()))
    });
    let mut out: Vec<String> = Vec::new();
    for d in ordered {
        if !out.contains(&d.text) {
            out.push(d.text.clone());
        }
    }
    out
}

const GENERATE_TASK: &str = "Write a search-engine meta title and meta description for the \
product page below. Follow the phrasing and structure of the exemplars, which are snippets \
that rank highly for related queries, but describe only this product. Respect every guardrail. \
Answer with exactly two lines: \"TITLE: <title>\" and \"DESCRIPTION: <description>\".";

const REFINE_TASK: &str = "Revise the previous meta title and description so that every \
directive below is satisfied while keeping what already works. Respect every guardrail. \
Answer with exactly two lines: \"TITLE: <title>\" and \"DESCRIPTION: <description>\".";

const FORMAT_REMINDER: &str = "Your previous answer could not be parsed. Reply with exactly \
two lines and nothing else:\nTITLE: <title>\nDESCRIPTION: <description>";

fn exemplar_section(exemplars: &[&Exemplar]) -> String {
    if exemplars.is_empty() {
        return "none".into();
    }
    exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{}.\n{}", i + 1, format_completion(&e.title, &e.description)))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn guardrail_section(guardrails: &Guardrails) -> String {
    let mut lines: Vec<String> = guardrails
        .hard_prohibitions()
        .iter()
        .map(|h| format!("avoid: {}", h.source()))
        .collect();
    for r in guardrails.required_elements() {
        let m: Vec<&str> = r.matchers.iter().map(|m| m.source()).collect();
        lines.push(format!("include {}: {}", r.name, m.join(" | ")));
    }
    if lines.is_empty() {
        "none".into()
    } else {
        lines.join("\n")
    }
}

/// Builds the generation (or, with `previous`, refinement) prompt.
///
/// Sections, in order: task, page, exemplars, guardrails, and when refining
/// the previous snippet and the consolidated directives.
pub fn assemble_prompt(
    page: &ProductPage,
    exemplars: &[&Exemplar],
    guardrails: &Guardrails,
    previous: Option<&Snippet>,
    directives: Option<&[String]>,
) -> PromptParts {
    let refining = previous.is_some();
    let mut p = PromptParts::new(if refining {
        PromptTask::Refine
    } else {
        PromptTask::Generate
    });
    p.push(SECTION_TASK, if refining { REFINE_TASK } else { GENERATE_TASK });
    p.push(SECTION_PAGE, page.serialize_attributes());
    p.push(SECTION_EXEMPLARS, exemplar_section(exemplars));
    p.push(SECTION_GUARDRAILS, guardrail_section(guardrails));
    if let Some(prev) = previous {
        p.push(
            SECTION_PREVIOUS,
            format_completion(prev.title(), prev.description()),
        );
        let text = directives
            .unwrap_or_default()
            .iter()
            .map(|d| format!("- {d}"))
            .collect::<Vec<_>>()
            .join("\n");
        p.push(SECTION_DIRECTIVES, text);
    }
    p
}

/// Sends `prompt`, reprompting once with a format reminder while
/// `max_calls` allows. Returns the outcome and the number of calls made.
fn complete_snippet(
    prompt: &PromptParts,
    llm: &dyn GeneratorClient,
    max_calls: usize,
) -> (Result<Snippet>, usize) {
    let mut calls = 0;
    let mut last = Error::GenerationFormat("no generator call allowed".into());
    let mut prompt = prompt.clone();
    while calls < max_calls.min(2) {
        calls += 1;
        match llm.complete(&prompt).and_then(|t| parse_completion(&t)) {
            Ok(s) => return (Ok(s), calls),
            Err(e @ Error::GenerationFormat(_)) => {
                last = e;
                if prompt.section(SECTION_FORMAT).is_none() {
                    prompt.push(SECTION_FORMAT, FORMAT_REMINDER);
                }
            }
            Err(e) => return (Err(e), calls),
        }
    }
    (Err(last), calls)
}

/// `y(0)`: first candidate from page, exemplars and guardrails.
pub fn generate_initial(
    page: &ProductPage,
    exemplars: &[&Exemplar],
    guardrails: &Guardrails,
    llm: &dyn GeneratorClient,
) -> Result<Snippet> {
    let prompt = assemble_prompt(page, exemplars, guardrails, None, None);
    complete_snippet(&prompt, llm, 2).0
}

/// `y(t+1)`: revision of `previous` under `directives`.
pub fn refine(
    page: &ProductPage,
    exemplars: &[&Exemplar],
    guardrails: &Guardrails,
    previous: &Snippet,
    directives: &[String],
    llm: &dyn GeneratorClient,
) -> Result<Snippet> {
    if directives.is_empty() {
        return Err(Error::invalid("refine requires at least one directive"));
    }
    let prompt = assemble_prompt(page, exemplars, guardrails, Some(previous), Some(directives));
    complete_snippet(&prompt, llm, 2).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Accepted,
    BudgetExhausted,
    Stagnated,
    /// A refinement could not be produced; see [`RefinementTrace::error`].
    GenerationFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Iteration {
    pub snippet: Snippet,
    pub scores: ScoreVector,
    pub feedback: Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementTrace {
    pub iterations: Vec<Iteration>,
    pub stop_reason: StopReason,
    pub accepted_index: Option<usize>,
    /// Highest aggregate score, earliest on ties.
    pub best_index: usize,
    pub generator_calls: usize,
    pub error: Option<String>,
}

impl RefinementTrace {
    pub fn accepted(&self) -> bool {
        self.stop_reason == StopReason::Accepted
    }

    /// The accepted iterate, or the best one when nothing was accepted.
    pub fn final_iteration(&self) -> &Iteration {
        &self.iterations[self.accepted_index.unwrap_or(self.best_index)]
    }

    pub fn final_snippet(&self) -> &Snippet {
        &self.final_iteration().snippet
    }
}

/// Evaluate, then accept or refine, until acceptance, the generator-call
/// budget `k_max`, or stagnation.
///
/// Reprompts for unparseable completions count against the budget. A failure
/// to produce `y(0)` is returned as an error; a later failure ends the trace
/// with [`StopReason::GenerationFailed`].
pub fn run_loop(
    page: &ProductPage,
    exemplars: &[&Exemplar],
    guardrails: &Guardrails,
    cfg: &PipelineConfig,
    llm: &dyn GeneratorClient,
    panel: &EvaluatorPanel,
) -> Result<RefinementTrace> {
    if cfg.k_max == 0 {
        return Err(Error::invalid("k_max must be >= 1"));
    }
    let prompt = assemble_prompt(page, exemplars, guardrails, None, None);
    let (first, mut calls) = complete_snippet(&prompt, llm, cfg.k_max);
    let mut current = first?;

    let mut iterations: Vec<Iteration> = Vec::new();
    let mut best_index = 0;
    let mut flat_steps = 0;
    let mut error = None;
    let stop_reason = loop {
        let (scores, feedback) = panel.evaluate(&current, page, guardrails);
        let t = iterations.len();
        let aggregate = scores.aggregate();
        if t > 0 {
            if aggregate > iterations[best_index].scores.aggregate() {
                best_index = t;
            }
            if aggregate - iterations[t - 1].scores.aggregate() < cfg.stagnation_delta {
                flat_steps += 1;
            } else {
                flat_steps = 0;
            }
        }
        let accepted = scores.is_acceptable(guardrails);
        iterations.push(Iteration {
            snippet: current.clone(),
            scores,
            feedback,
        });
        if accepted {
            break StopReason::Accepted;
        }
        if cfg.stagnation_enabled && flat_steps >= cfg.stagnation_window {
            break StopReason::Stagnated;
        }
        if calls >= cfg.k_max {
            break StopReason::BudgetExhausted;
        }
        let directives = &iterations[t].feedback.consolidated;
        let prompt = assemble_prompt(page, exemplars, guardrails, Some(&current), Some(directives));
        let (next, used) = complete_snippet(&prompt, llm, cfg.k_max - calls);
        calls += used;
        match next {
            Ok(s) => current = s,
            Err(e) => {
                error = Some(e.to_string());
                break StopReason::GenerationFailed;
            }
        }
    };
    let accepted_index = (stop_reason == StopReason::Accepted).then(|| iterations.len() - 1);
    Ok(RefinementTrace {
        iterations,
        stop_reason,
        accepted_index,
        best_index,
        generator_calls: calls,
        error,
    })
}
