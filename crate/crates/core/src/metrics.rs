//! Ranking metrics over judged comparisons of competing snippet variants.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation::EvaluatorPanel;
use crate::model::{Guardrails, ProductPage, Snippet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainKind {
    /// `2^g - 1` with `g = n - rank`.
    #[default]
    Graded,
    /// `g` itself.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub method: String,
    pub snippet: Snippet,
}

/// One item's competing variants and the judge's ranking of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedItem {
    pub item_id: String,
    #[serde(default)]
    pub variants: Vec<Variant>,
    /// method -> rank, 1 = best.
    pub ranking: BTreeMap<String, usize>,
}

impl JudgedItem {
    pub fn validate(&self) -> Result<()> {
        let n = self.ranking.len();
        if n < 2 {
            return Err(Error::invalid(format!(
                "item {}: need at least two ranked methods",
                self.item_id
            )));
        }
        let mut seen = vec![false; n];
        for (method, &rank) in &self.ranking {
            if rank < 1 || rank > n || std::mem::replace(&mut seen[rank - 1], true) {
                return Err(Error::invalid(format!(
                    "item {}: ranking is not a permutation of 1..{n} (method {method} has rank {rank})",
                    self.item_id
                )));
            }
        }
        Ok(())
    }
}

/// Single-output-per-method NDCG: the method's one output sits at position 1,
/// so NDCG reduces to its gain normalized by the best possible gain.
pub fn ndcg_for_item(rank: usize, n: usize) -> Result<f64> {
    ndcg_with_gain(rank, n, GainKind::Graded)
}

pub fn ndcg_with_gain(rank: usize, n: usize, gain: GainKind) -> Result<f64> {
    if n < 2 || rank < 1 || rank > n {
        return Err(Error::invalid(format!("rank {rank} out of range 1..={n}")));
    }
    let g = (n - rank) as f64;
    let top = (n - 1) as f64;
    Ok(match gain {
        GainKind::Graded => (g.exp2() - 1.0) / (top.exp2() - 1.0),
        GainKind::Linear => g / top,
    })
}

pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::invalid("mrr of an empty rank list"));
    }
    if ranks.contains(&0) {
        return Err(Error::invalid("ranks start at 1"));
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

pub fn average_rank(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::invalid("average rank of an empty rank list"));
    }
    Ok(ranks.iter().sum::<usize>() as f64 / ranks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub ndcg: f64,
    pub mrr: f64,
    pub avg_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub methods: BTreeMap<String, MethodMetrics>,
    pub items: usize,
}

impl MetricsTable {
    /// Fixed-width text table, one row per method.
    pub fn to_text(&self) -> String {
        let width = self
            .methods
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("method".len());
        let mut out = format!(
            "{:<width$}  {:>8}  {:>8}  {:>8}\n",
            "method", "ndcg", "mrr", "avg_rank"
        );
        for (m, v) in &self.methods {
            let _ = writeln!(
                out,
                "{m:<width$}  {:>8.4}  {:>8.4}  {:>8.4}",
                v.ndcg, v.mrr, v.avg_rank
            );
        }
        let _ = writeln!(out, "({} items)", self.items);
        out
    }
}

/// Per-method means of NDCG, MRR and rank across `items`.
pub fn compare_methods(items: &[JudgedItem], gain: GainKind) -> Result<MetricsTable> {
    let Some(first) = items.first() else {
        return Err(Error::invalid("no judged items"));
    };
    let methods: Vec<&String> = first.ranking.keys().collect();
    let mut ranks: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut ndcg_sums: BTreeMap<&str, f64> = BTreeMap::new();
    for item in items {
        item.validate()?;
        if item.ranking.keys().collect::<Vec<_>>() != methods {
            return Err(Error::invalid(format!(
                "item {} has a different method set",
                item.item_id
            )));
        }
        let n = item.ranking.len();
        for (m, &r) in &item.ranking {
            ranks.entry(m).or_default().push(r);
            *ndcg_sums.entry(m).or_default() += ndcg_with_gain(r, n, gain)?;
        }
    }
    let count = items.len() as f64;
    let methods = ranks
        .into_iter()
        .map(|(m, r)| {
            Ok((
                m.to_string(),
                MethodMetrics {
                    ndcg: ndcg_sums[m] / count,
                    mrr: mrr(&r)?,
                    avg_rank: average_rank(&r)?,
                },
            ))
        })
        .collect::<Result<_>>()?;
    Ok(MetricsTable {
        methods,
        items: items.len(),
    })
}

/// Ranks one item's variants.
pub trait Judge: Send + Sync {
    fn rank(
        &self,
        page: &ProductPage,
        variants: &[Variant],
        guardrails: &Guardrails,
    ) -> Result<BTreeMap<String, usize>>;
}

/// Ranks variants by the built-in evaluators' aggregate score, best first;
/// ties go to the lexicographically smaller method name.
pub struct MockJudge {
    panel: EvaluatorPanel,
}

impl MockJudge {
    pub fn new(panel: EvaluatorPanel) -> Self {
        Self { panel }
    }
}

impl Judge for MockJudge {
    fn rank(
        &self,
        page: &ProductPage,
        variants: &[Variant],
        guardrails: &Guardrails,
    ) -> Result<BTreeMap<String, usize>> {
        let mut scored: Vec<(&str, f64)> = variants
            .iter()
            .map(|v| {
                let (s, _) = self.panel.evaluate(&v.snippet, page, guardrails);
                (v.method.as_str(), s.aggregate())
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let ranking: BTreeMap<String, usize> = scored
            .into_iter()
            .enumerate()
            .map(|(i, (m, _))| (m.to_string(), i + 1))
            .collect();
        if ranking.len() != variants.len() {
            return Err(Error::invalid("variant method names must be distinct"));
        }
        Ok(ranking)
    }
}

/// Reads a JSON-lines rankings file.
pub fn load_rankings(path: &Path) -> Result<Vec<JudgedItem>> {
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
