//! Domain types shared across the pipeline plus the similarity and
//! guardrail primitives everything else is built on.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token placed between a title and a description when the pair is embedded
/// or matched as one piece of text.
pub const SNIPPET_SEPARATOR: &str = " || ";

/// One named attribute of a product page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub value: String,
}

impl Attribute {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: value.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawPage {
    page_id: String,
    url: String,
    attributes: Vec<Attribute>,
}

/// A target page: its identifier, canonical URL and ordered attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPage", into = "RawPage")]
pub struct ProductPage {
    page_id: String,
    url: String,
    attributes: Vec<Attribute>,
}

impl ProductPage {
    pub fn new(
        page_id: impl Into<String>,
        url: impl Into<String>,
        attributes: Vec<Attribute>,
    ) -> Result<Self> {
        let page_id = page_id.into();
        let url = url.into();
        if page_id.trim().is_empty() {
            return Err(Error::invalid("page_id must be non-empty"));
        }
        url::Url::parse(&url).map_err(|e| Error::invalid(format!("page url {url:?}: {e}")))?;
        if !attributes.iter().any(|a| !a.value.trim().is_empty()) {
            return Err(Error::invalid(format!(
                "page {page_id} has no non-empty attribute"
            )));
        }
        Ok(Self {
            page_id,
            url,
            attributes,
        })
    }

    pub fn page_id(&self) -> &str {
        &self.page_id
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    /// First value stored under `name` (case-insensitive attribute name).
    pub fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|a| a.name.eq_ignore_ascii_case(name))
            .map(|a| a.value.as_str())
    }

    /// Canonical text form: one `name: value` line per attribute, in source order.
    pub fn serialize_attributes(&self) -> String {
        self.attributes
            .iter()
            .map(|a| format!("{}: {}", a.name, a.value))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl TryFrom<RawPage> for ProductPage {
    type Error = Error;

    fn try_from(raw: RawPage) -> Result<Self> {
        ProductPage::new(raw.page_id, raw.url, raw.attributes)
    }
}

impl From<ProductPage> for RawPage {
    fn from(p: ProductPage) -> Self {
        RawPage {
            page_id: p.page_id,
            url: p.url,
            attributes: p.attributes,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawSnippet {
    title: String,
    description: String,
}

/// A candidate meta title and description.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSnippet", into = "RawSnippet")]
pub struct Snippet {
    title: String,
    description: String,
}

impl Snippet {
    pub fn new(title: impl Into<String>, description: impl Into<String>) -> Result<Self> {
        let title = title.into();
        let description = description.into();
        for (field, text) in [("title", &title), ("description", &description)] {
            if text.trim().is_empty() {
                return Err(Error::invalid(format!("snippet {field} must be non-empty")));
            }
            if text.chars().any(char::is_control) {
                return Err(Error::invalid(format!(
                    "snippet {field} contains control characters"
                )));
            }
        }
        Ok(Self { title, description })
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// The joined `title || description` text.
    pub fn joined(&self) -> String {
        concat_snippet(&self.title, &self.description).expect("snippet fields are non-empty")
    }
}

impl TryFrom<RawSnippet> for Snippet {
    type Error = Error;

    fn try_from(raw: RawSnippet) -> Result<Self> {
        Snippet::new(raw.title, raw.description)
    }
}

impl From<Snippet> for RawSnippet {
    fn from(s: Snippet) -> Self {
        RawSnippet {
            title: s.title,
            description: s.description,
        }
    }
}

impl fmt::Display for Snippet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\n{}", self.title, self.description)
    }
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

/// Allowed deviation of a stored embedding's L2 norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

impl EmbeddingVector {
    /// Normalizes `values` to unit length.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding must have at least one dimension"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding contains non-finite values"));
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(Error::invalid("cannot normalize a zero vector"));
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Wraps values that are already unit-norm, checking the invariant.
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        let v = Self { values };
        v.check_unit()?;
        Ok(v)
    }

    pub fn check_unit(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding contains non-finite values"));
        }
        let norm = l2_norm(&self.values);
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::invalid(format!(
                "embedding norm {norm} is not 1 within {UNIT_NORM_TOLERANCE}"
            )));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One harvested search result: the query that surfaced it, where it pointed,
/// what it said and where it ranked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub query: String,
    pub url: String,
    pub title: String,
    pub description: String,
    pub rank: u32,
    pub embedding: EmbeddingVector,
}

impl Exemplar {
    pub fn validate(&self) -> Result<()> {
        if self.rank < 1 {
            return Err(Error::invalid("exemplar rank must be >= 1"));
        }
        self.embedding.check_unit()
    }
}

/// Replaces separator occurrences so a joined snippet can always be split back.
pub fn sanitize_snippet_field(text: &str, is_title: bool) -> String {
    let mut out = text.to_string();
    while out.contains(SNIPPET_SEPARATOR) {
        out = out.replace(SNIPPET_SEPARATOR, " | ");
    }
    // A title ending in " ||" would otherwise fuse with the separator.
    if is_title {
        while out.ends_with(" ||") {
            out.truncate(out.len() - 1);
        }
    }
    out
}

/// Joins a title and description with [`SNIPPET_SEPARATOR`].
pub fn concat_snippet(title: &str, description: &str) -> Result<String> {
    if title.is_empty() || description.is_empty() {
        return Err(Error::invalid("title and description must be non-empty"));
    }
    Ok(format!(
        "{}{}{}",
        sanitize_snippet_field(title, true),
        SNIPPET_SEPARATOR,
        sanitize_snippet_field(description, false)
    ))
}

/// Splits joined text at the first separator.
pub fn split_snippet(text: &str) -> Option<(&str, &str)> {
    text.split_once(SNIPPET_SEPARATOR)
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dimension(),
            b.dimension()
        )));
    }
    Ok(cosine_unchecked(a.values(), b.values()))
}

pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        return 0.0;
    }
    (dot / denom).clamp(-1.0, 1.0)
}

/// Lowercases scheme and host and drops a trailing slash.
pub fn canonicalize_url(raw: &str) -> String {
    let trimmed = raw.trim();
    match url::Url::parse(trimmed) {
        Ok(u) => u.as_str().trim_end_matches('/').to_string(),
        Err(_) => trimmed.trim_end_matches('/').to_string(),
    }
}

/// The four evaluation criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Rel,
    Promo,
    Cta,
    Brand,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::Rel,
        Criterion::Promo,
        Criterion::Cta,
        Criterion::Brand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Rel => "rel",
            Criterion::Promo => "promo",
            Criterion::Cta => "cta",
            Criterion::Brand => "brand",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Criterion::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Position in the consolidation fallback order: brand, rel, cta, promo.
    pub fn consolidation_order(self) -> u8 {
        match self {
            Criterion::Brand => 0,
            Criterion::Rel => 1,
            Criterion::Cta => 2,
            Criterion::Promo => 3,
        }
    }

    pub fn default_threshold(self) -> f64 {
        match self {
            Criterion::Rel => 0.5,
            Criterion::Promo => 0.34,
            Criterion::Cta => 1.0,
            Criterion::Brand => 1.0,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Prefix marking a guardrail entry as a regular expression instead of a literal.
pub const PATTERN_PREFIX: &str = "re:";

/// A case-insensitive literal phrase or pattern.
#[derive(Debug, Clone)]
pub struct Matcher {
    source: String,
    regex: Regex,
}

impl Matcher {
    /// Parses `re:<pattern>` as a regex and anything else as a literal phrase.
    pub fn parse(source: &str) -> Result<Self> {
        if source.trim().is_empty() {
            return Err(Error::invalid("guardrail entries must be non-empty"));
        }
        let pattern = match source.strip_prefix(PATTERN_PREFIX) {
            Some(p) => format!("(?i){p}"),
            None => format!("(?i){}", regex::escape(source)),
        };
        let regex = Regex::new(&pattern)
            .map_err(|e| Error::invalid(format!("bad guardrail pattern {source:?}: {e}")))?;
        Ok(Self {
            source: source.to_string(),
            regex,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// The literal phrase, if this matcher is not a pattern.
    pub fn phrase(&self) -> Option<&str> {
        if self.source.starts_with(PATTERN_PREFIX) {
            None
        } else {
            Some(&self.source)
        }
    }

    pub fn find_all<'a>(&'a self, text: &'a str) -> impl Iterator<Item = Range<usize>> + 'a {
        self.regex.find_iter(text).map(|m| m.range())
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.regex.is_match(text)
    }
}

impl PartialEq for Matcher {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

/// A named element that must appear in every accepted snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct RequiredElement {
    pub name: String,
    pub matchers: Vec<Matcher>,
}

impl RequiredElement {
    pub fn new(name: impl Into<String>, entries: &[&str]) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::invalid("required element name must be non-empty"));
        }
        if entries.is_empty() {
            return Err(Error::invalid(format!(
                "required element {name} has no matcher"
            )));
        }
        let matchers = entries
            .iter()
            .map(|e| Matcher::parse(e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { name, matchers })
    }

    pub fn is_present(&self, text: &str) -> bool {
        self.matchers.iter().any(|m| m.is_match(text))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRequired {
    name: String,
    matchers: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawGuardrails {
    #[serde(default)]
    hard_prohibitions: Vec<String>,
    #[serde(default)]
    required_elements: Vec<RawRequired>,
    #[serde(default)]
    thresholds: BTreeMap<String, f64>,
}

/// Hard prohibitions, required elements and per-criterion thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGuardrails", into = "RawGuardrails")]
pub struct Guardrails {
    hard_prohibitions: Vec<Matcher>,
    required_elements: Vec<RequiredElement>,
    thresholds: BTreeMap<Criterion, f64>,
}

impl Default for Guardrails {
    fn default() -> Self {
        Self {
            hard_prohibitions: Vec::new(),
            required_elements: Vec::new(),
            thresholds: default_thresholds(),
        }
    }
}

pub fn default_thresholds() -> BTreeMap<Criterion, f64> {
    Criterion::ALL
        .into_iter()
        .map(|c| (c, c.default_threshold()))
        .collect()
}

impl Guardrails {
    pub fn new(
        hard_prohibitions: &[&str],
        required_elements: Vec<RequiredElement>,
        thresholds: BTreeMap<Criterion, f64>,
    ) -> Result<Self> {
        let hard_prohibitions = hard_prohibitions
            .iter()
            .map(|h| Matcher::parse(h))
            .collect::<Result<Vec<_>>>()?;
        let g = Self {
            hard_prohibitions,
            required_elements,
            thresholds,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for c in Criterion::ALL {
            match self.thresholds.get(&c) {
                None => {
                    return Err(Error::config(
                        format!("guardrails.thresholds.{c}"),
                        "missing threshold",
                    ))
                }
                Some(t) if !(0.0..=1.0).contains(t) => {
                    return Err(Error::config(
                        format!("guardrails.thresholds.{c}"),
                        format!("threshold {t} outside [0, 1]"),
                    ))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn hard_prohibitions(&self) -> &[Matcher] {
        &self.hard_prohibitions
    }

    pub fn required_elements(&self) -> &[RequiredElement] {
        &self.required_elements
    }

    pub fn thresholds(&self) -> &BTreeMap<Criterion, f64> {
        &self.thresholds
    }

    pub fn threshold(&self, c: Criterion) -> f64 {
        self.thresholds[&c]
    }

    pub fn with_threshold(mut self, c: Criterion, value: f64) -> Result<Self> {
        self.thresholds.insert(c, value);
        self.validate()?;
        Ok(self)
    }

    /// Number of hard plus required entries.
    pub fn rule_count(&self) -> usize {
        self.hard_prohibitions.len() + self.required_elements.len()
    }
}

impl TryFrom<RawGuardrails> for Guardrails {
    type Error = Error;

    fn try_from(raw: RawGuardrails) -> Result<Self> {
        let mut thresholds = default_thresholds();
        for (key, value) in raw.thresholds {
            let c = Criterion::from_name(&key).ok_or_else(|| {
                Error::config(
                    format!("guardrails.thresholds.{key}"),
                    "unknown criterion (expected rel, promo, cta or brand)",
                )
            })?;
            thresholds.insert(c, value);
        }
        let required = raw
            .required_elements
            .into_iter()
            .map(|r| {
                let entries: Vec<&str> = r.matchers.iter().map(String::as_str).collect();
                RequiredElement::new(r.name, &entries)
            })
            .collect::<Result<Vec<_>>>()?;
        let hard: Vec<&str> = raw.hard_prohibitions.iter().map(String::as_str).collect();
        Guardrails::new(&hard, required, thresholds)
    }
}

impl From<Guardrails> for RawGuardrails {
    fn from(g: Guardrails) -> Self {
        RawGuardrails {
            hard_prohibitions: g
                .hard_prohibitions
                .iter()
                .map(|m| m.source.clone())
                .collect(),
            required_elements: g
                .required_elements
                .iter()
                .map(|r| RawRequired {
                    name: r.name.clone(),
                    matchers: r.matchers.iter().map(|m| m.source.clone()).collect(),
                })
                .collect(),
            thresholds: g
                .thresholds
                .iter()
                .map(|(c, v)| (c.name().to_string(), *v))
                .collect(),
        }
    }
}

/// A hard-prohibition hit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// The prohibition entry that matched, as configured.
    pub phrase: String,
    pub span: Range<usize>,
}

/// Every case-insensitive occurrence of a hard prohibition in `text`.
pub fn scan_hard_constraints(text: &str, guardrails: &Guardrails) -> Vec<Violation> {
    guardrails
        .hard_prohibitions
        .iter()
        .flat_map(|m| {
            m.find_all(text).map(move |span| Violation {
                phrase: m.source.clone(),
                span,
            })
        })
        .collect()
}

/// Names of required elements absent from the joined snippet text.
pub fn check_required_elements(snippet: &Snippet, guardrails: &Guardrails) -> Vec<String> {
    let text = snippet.joined();
    guardrails
        .required_elements
        .iter()
        .filter(|r| !r.is_present(&text))
        .map(|r| r.name.clone())
        .collect()
}

/// Every tunable of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Results harvested per seed query.
    pub k_lib: usize,
    /// Depth at which an expanded query must surface the target URL.
    pub k_hit: usize,
    /// Results harvested per surviving expanded query.
    pub k_aug: usize,
    pub epsilon_dup: f64,
    pub tau_q: f64,
    /// Few-shot exemplars per page.
    pub m: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub k_max: usize,
    pub stagnation_enabled: bool,
    pub stagnation_delta: f64,
    pub stagnation_window: usize,
    pub dimension: usize,
    /// Upper bound on queries returned by expansion.
    pub n_expand: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_lib: 10,
            k_hit: 10,
            k_aug: 5,
            epsilon_dup: 0.95,
            tau_q: 0.5,
            m: 3,
            lambda: 0.7,
            gamma: 0.1,
            k_max: 5,
            stagnation_enabled: true,
            stagnation_delta: 0.01,
            stagnation_window: 2,
            dimension: 256,
            n_expand: 5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_lib", self.k_lib),
            ("k_hit", self.k_hit),
            ("k_aug", self.k_aug),
            ("m", self.m),
            ("k_max", self.k_max),
            ("stagnation_window", self.stagnation_window),
            ("dimension", self.dimension),
            ("n_expand", self.n_expand),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be a positive integer"));
            }
        }
        let open_unit = |key: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("{v} outside (0, 1)")))
            }
        };
        open_unit("epsilon_dup", self.epsilon_dup)?;
        open_unit("tau_q", self.tau_q)?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(
                "lambda",
                format!("{} outside [0, 1]", self.lambda),
            ));
        }
        if !self.gamma.is_finite() {
            return Err(Error::config("gamma", "must be finite"));
        }
        if !(self.stagnation_delta >= 0.0 && self.stagnation_delta.is_finite()) {
            return Err(Error::config("stagnation_delta", "must be >= 0"));
        }
        Ok(())
    }
}
