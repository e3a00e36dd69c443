//! Generator clients: the prompt representation, the completion wire format,
//! a deterministic template generator for offline runs, and an HTTP
//! chat-completion client.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::embedding::tokenize;
use crate::error::{Error, Result};
use crate::model::{Snippet, PATTERN_PREFIX};

pub const SECTION_TASK: &str = "task";
pub const SECTION_PAGE: &str = "page";
pub const SECTION_EXEMPLARS: &str = "exemplars";
pub const SECTION_GUARDRAILS: &str = "guardrails";
pub const SECTION_PREVIOUS: &str = "previous";
pub const SECTION_DIRECTIVES: &str = "directives";
pub const SECTION_FORMAT: &str = "format";

pub const TITLE_LABEL: &str = "TITLE:";
pub const DESCRIPTION_LABEL: &str = "DESCRIPTION:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptTask {
    Expand,
    Generate,
    Refine,
}

/// An ordered list of labeled prompt sections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptParts {
    pub task: PromptTask,
    pub sections: Vec<(String, String)>,
}

impl PromptParts {
    pub fn new(task: PromptTask) -> Self {
        Self {
            task,
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, label: &str, text: impl Into<String>) {
        self.sections.push((label.to_string(), text.into()));
    }

    pub fn section(&self, label: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, t)| t.as_str())
    }

    /// Plain-text rendering: `## label` headers followed by the section text.
    pub fn render(&self) -> String {
        self.sections
            .iter()
            .map(|(l, t)| format!("## {l}\n{t}"))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Something that turns a prompt into completion text.
pub trait GeneratorClient: Send + Sync {
    fn complete(&self, prompt: &PromptParts) -> Result<String>;
}

impl<F> GeneratorClient for F
where
    F: Fn(&PromptParts) -> Result<String> + Send + Sync,
{
    fn complete(&self, prompt: &PromptParts) -> Result<String> {
        self(prompt)
    }
}

/// Renders a snippet in the completion wire format.
pub fn format_completion(title: &str, description: &str) -> String {
    format!("{TITLE_LABEL} {title}\n{DESCRIPTION_LABEL} {description}")
}

fn labeled<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let line = line.trim();
    let head = line.get(..label.len())?;
    head.eq_ignore_ascii_case(label)
        .then(|| line[label.len()..].trim())
}

/// Parses `TITLE: ...` / `DESCRIPTION: ...` lines out of a completion.
pub fn parse_completion(text: &str) -> Result<Snippet> {
    let title = text.lines().find_map(|l| labeled(l, TITLE_LABEL));
    let description = text.lines().find_map(|l| labeled(l, DESCRIPTION_LABEL));
    match (title, description) {
        (Some(t), Some(d)) if !t.is_empty() && !d.is_empty() => {
            Snippet::new(t, d).map_err(|e| Error::GenerationFormat(e.to_string()))
        }
        _ => Err(Error::GenerationFormat(format!(
            "expected {TITLE_LABEL} and {DESCRIPTION_LABEL} lines, got {:?}",
            truncate(text, 80)
        ))),
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// Reads `name: value` lines back out of a page section.
pub fn parse_page_section(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(": "))
        .map(|(n, v)| (n.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Reads (title, description) pairs back out of an exemplar section.
pub fn parse_exemplar_section(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut title = None;
    for line in text.lines() {
        if let Some(t) = labeled(line, TITLE_LABEL) {
            title = Some(t.to_string());
        } else if let Some(d) = labeled(line, DESCRIPTION_LABEL) {
            if let Some(t) = title.take() {
                out.push((t, d.to_string()));
            }
        }
    }
    out
}

/// Default promotional vocabulary, one term per line.
pub const PROMO_LEXICON: &str = include_str!("../data/promo_lexicon.txt");

/// Default call-to-action phrases, one per line.
pub const CTA_PHRASES: &str = include_str!("../data/cta_phrases.txt");

pub fn lines_of(data: &str) -> Vec<String> {
    data.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// True when the token sequence of `phrase` occurs contiguously in `tokens`.
pub fn contains_phrase(tokens: &[String], phrase: &str) -> bool {
    let p = tokenize(phrase);
    !p.is_empty() && tokens.windows(p.len()).any(|w| w == p.as_slice())
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn sentence(s: &str) -> String {
    let s = s.trim().trim_end_matches(['.', '!', ' ']);
    format!("{}.", capitalize(s))
}

/// Attribute names that never count as the "selling point".
const NON_SELLING: [&str; 4] = ["name", "brand", "category", "title"];

/// Deterministic template generator.
///
/// * expand: `brand name`, `name`, `brand <last word of name>`, one per line.
/// * generate: title `brand name`; description is the first selling attribute,
///   then up to two promotional terms borrowed from the exemplars, then a
///   call to action (the first one the exemplars use, else "Shop now").
/// * refine: edits the previous snippet according to each directive.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    lexicon: Vec<String>,
    cta_phrases: Vec<String>,
    calls: std::sync::Arc<AtomicUsize>,
}

impl Default for MockGenerator {
    fn default() -> Self {
        Self::new(lines_of(PROMO_LEXICON), lines_of(CTA_PHRASES))
    }
}

impl MockGenerator {
    pub const DEFAULT_CTA: &'static str = "shop now";

    pub fn new(lexicon: Vec<String>, cta_phrases: Vec<String>) -> Self {
        Self {
            lexicon,
            cta_phrases,
            calls: Default::default(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn page(prompt: &PromptParts) -> Vec<(String, String)> {
        prompt
            .section(SECTION_PAGE)
            .map(parse_page_section)
            .unwrap_or_default()
    }

    fn attr<'a>(page: &'a [(String, String)], name: &str) -> Option<&'a str> {
        page.iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
            .filter(|v| !v.is_empty())
    }

    fn expand(&self, prompt: &PromptParts) -> String {
        let page = Self::page(prompt);
        let name = Self::attr(&page, "name").or_else(|| page.first().map(|(_, v)| v.as_str()));
        let Some(name) = name else {
            return String::new();
        };
        let brand = Self::attr(&page, "brand");
        let head = name.split_whitespace().last().unwrap_or(name);
        let lines = match brand {
            Some(b) => vec![format!("{b} {name}"), name.to_string(), format!("{b} {head}")],
            None => vec![name.to_string(), head.to_string()],
        };
        lines.join("\n").to_lowercase()
    }

    fn generate(&self, prompt: &PromptParts) -> String {
        let page = Self::page(prompt);
        let name = Self::attr(&page, "name")
            .or_else(|| page.first().map(|(_, v)| v.as_str()))
            .unwrap_or("Product");
        let title = match Self::attr(&page, "brand") {
            Some(b) if !name.to_lowercase().starts_with(&b.to_lowercase()) => format!("{b} {name}"),
            _ => name.to_string(),
        };
        let selling = page
            .iter()
            .find(|(n, v)| {
                !v.is_empty() && !NON_SELLING.iter().any(|x| n.eq_ignore_ascii_case(x))
            })
            .map(|(_, v)| v.as_str())
            .or_else(|| Self::attr(&page, "category"))
            .unwrap_or(name);

        let exemplars = prompt
            .section(SECTION_EXEMPLARS)
            .map(parse_exemplar_section)
            .unwrap_or_default();
        let ex_tokens: Vec<String> = exemplars
            .iter()
            .flat_map(|(t, d)| tokenize(&format!("{t} {d}")))
            .collect();
        let selling_tokens = tokenize(selling);
        let mut cues: Vec<&str> = Vec::new();
        for tok in &ex_tokens {
            if cues.len() == 2 {
                break;
            }
            if self.lexicon.iter().any(|l| l == tok)
                && !cues.contains(&tok.as_str())
                && !selling_tokens.contains(tok)
            {
                cues.push(tok);
            }
        }
        let cta = self
            .cta_phrases
            .iter()
            .find(|c| contains_phrase(&ex_tokens, c))
            .map(String::as_str)
            .unwrap_or(Self::DEFAULT_CTA);

        let mut description = sentence(selling);
        if !cues.is_empty() {
            description.push(' ');
            description.push_str(&sentence(&format!("{} pick", cues.join(", "))));
        }
        description.push(' ');
        description.push_str(&capitalize(cta));
        description.push('!');
        format_completion(&title, &description)
    }

    fn refine(&self, prompt: &PromptParts) -> Result<String> {
        let previous = prompt
            .section(SECTION_PREVIOUS)
            .ok_or_else(|| Error::Client("refine prompt without previous snippet".into()))?;
        let prev = parse_completion(previous).map_err(|e| Error::Client(e.to_string()))?;
        let (mut title, mut description) =
            (prev.title().to_string(), prev.description().to_string());
        let guardrails = prompt.section(SECTION_GUARDRAILS).unwrap_or("");
        let directives = prompt.section(SECTION_DIRECTIVES).unwrap_or("");

        for d in directives.lines().map(|l| l.trim().trim_start_matches("- ")) {
            if let Some(term) = d.strip_prefix("remove forbidden term ") {
                title = remove_term(&title, term);
                description = remove_term(&description, term);
            } else if d == "insert a call to action" {
                description = format!("{} {}!", description.trim_end(), capitalize(Self::DEFAULT_CTA));
            } else if d == "increase promotional strength" {
                let tokens = tokenize(&format!("{title} {description}"));
                if let Some(term) = self.lexicon.iter().find(|l| !contains_phrase(&tokens, l)) {
                    description = format!("{} {}", description.trim_end(), sentence(&format!("{term} quality")));
                }
            } else if let Some(value) = d.strip_prefix("increase relevance: mention ") {
                description = format!("{} {}", description.trim_end(), sentence(value));
            } else if let Some(name) = d.strip_prefix("include required element ") {
                let prefix = format!("include {name}: ");
                let phrase = guardrails
                    .lines()
                    .find_map(|l| l.trim().strip_prefix(prefix.as_str()))
                    .and_then(|rest| {
                        rest.split(" | ")
                            .find(|p| !p.starts_with(PATTERN_PREFIX))
                    });
                if let Some(p) = phrase {
                    description = format!("{} {}", description.trim_end(), sentence(p));
                }
            }
        }
        if title.trim().is_empty() {
            title = prev.title().to_string();
        }
        if description.trim().is_empty() {
            description = prev.description().to_string();
        }
        Ok(format_completion(title.trim(), description.trim()))
    }
}

fn remove_term(text: &str, term: &str) -> String {
    let pattern = match term.strip_prefix(PATTERN_PREFIX) {
        Some(p) => format!("(?i){p}"),
        None => format!("(?i){}", regex::escape(term)),
    };
    let Ok(re) = regex::Regex::new(&pattern) else {
        return text.to_string();
    };
    let removed = re.replace_all(text, "");
    let collapsed = removed.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .replace(" .", ".")
        .replace(" ,", ",")
        .replace(" !", "!")
        .replace(",.", ".")
}

impl GeneratorClient for MockGenerator {
    fn complete(&self, prompt: &PromptParts) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match prompt.task {
            PromptTask::Expand => Ok(self.expand(prompt)),
            PromptTask::Generate => Ok(self.generate(prompt)),
            PromptTask::Refine => self.refine(prompt),
        }
    }
}

/// Replays a fixed list of completions, repeating the last one forever.
pub struct ScriptedGenerator {
    script: Vec<std::result::Result<String, String>>,
    calls: AtomicUsize,
}

impl ScriptedGenerator {
    pub fn new<I, S>(completions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: completions.into_iter().map(|s| Ok(s.into())).collect(),
            calls: AtomicUsize::new(0),
        }
    }

    /// A script step that fails with a client error.
    pub fn with_failure_at(mut self, step: usize, message: &str) -> Self {
        while self.script.len() <= step {
            self.script.push(Ok(String::new()));
        }
        self.script[step] = Err(message.to_string());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl GeneratorClient for ScriptedGenerator {
    fn complete(&self, _prompt: &PromptParts) -> Result<String> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        let step = self
            .script
            .get(i)
            .or_else(|| self.script.last())
            .ok_or_else(|| Error::Client("empty script".into()))?;
        step.clone().map_err(Error::Client)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpChatConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for HttpChatConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            timeout_ms: 60_000,
            max_in_flight: 4,
        }
    }
}

struct Gate {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn acquire(&self) {
        let mut n = self.slots.lock().expect("gate poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("gate poisoned");
        }
        *n -= 1;
    }

    fn release(&self) {
        *self.slots.lock().expect("gate poisoned") += 1;
        self.freed.notify_one();
    }
}

/// Chat-completion client. The task section becomes the system message and
/// the remaining sections the user message; temperature is pinned to 0.
pub struct HttpChatClient {
    config: HttpChatConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    gate: Gate,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl HttpChatClient {
    pub const API_KEY_VAR: &'static str = "LLM_API_KEY";

    pub fn new(config: HttpChatConfig) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::config("llm.endpoint", "endpoint is required"));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Client(e.to_string()))?;
        let slots = config.max_in_flight.max(1);
        Ok(Self {
            config,
            api_key: std::env::var(Self::API_KEY_VAR).ok(),
            client,
            gate: Gate {
                slots: Mutex::new(slots),
                freed: Condvar::new(),
            },
        })
    }

    pub fn request_body(&self, prompt: &PromptParts) -> serde_json::Value {
        let system = prompt.section(SECTION_TASK).unwrap_or_default();
        let user = PromptParts {
            task: prompt.task,
            sections: prompt
                .sections
                .iter()
                .filter(|(l, _)| l != SECTION_TASK)
                .cloned()
                .collect(),
        }
        .render();
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        })
    }

    fn send(&self, prompt: &PromptParts) -> Result<String> {
        let mut req = self
            .client
            .post(&self.config.endpoint)
            .json(&self.request_body(prompt));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Client(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(Error::Client(format!("status {}", resp.status())));
        }
        let body: ChatResponse = resp
            .json()
            .map_err(|e| Error::Client(format!("bad response: {e}")))?;
        body.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Error::Client("no choices in response".into()))
    }
}

impl GeneratorClient for HttpChatClient {
    fn complete(&self, prompt: &PromptParts) -> Result<String> {
        self.gate.acquire();
        let out = self.send(prompt);
        self.gate.release();
        out
    }
}
