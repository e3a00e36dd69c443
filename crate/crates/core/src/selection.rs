//! Few-shot exemplar selection by greedy, rank-weighted maximal marginal
//! relevance.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::Serialize;

use crate::library::ExemplarId;
use crate::model::{cosine_unchecked, EmbeddingVector, Exemplar, PipelineConfig};

/// Multiplier applied to an exemplar's relevance based on its source rank.
///
/// `1 + gamma * (k_lib - min(rank, k_lib)) / max(k_lib - 1, 1)`: rank 1 gets
/// the full `1 + gamma`, ranks at or below `k_lib` get exactly 1. Negative
/// `gamma` deflates top-ranked exemplars instead.
pub fn rank_weight(rank: u32, gamma: f64, k_lib: usize) -> f64 {
    let k = k_lib as f64;
    let r = (rank.max(1) as f64).min(k);
    1.0 + gamma * (k - r) / (k - 1.0).max(1.0)
}

/// `lambda * w(r) * sim(z, e) - (1 - lambda) * max_{e' in selected} sim(e, e')`,
/// with the diversity term 0 while nothing is selected.
pub fn mmr_score(
    candidate: &Exemplar,
    selected: &[&Exemplar],
    z_x: &EmbeddingVector,
    lambda: f64,
    gamma: f64,
    k_lib: usize,
) -> f64 {
    let relevance = cosine_unchecked(z_x.values(), candidate.embedding.values());
    let redundancy = selected
        .iter()
        .map(|s| cosine_unchecked(candidate.embedding.values(), s.embedding.values()))
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
        .unwrap_or(0.0);
    lambda * rank_weight(candidate.rank, gamma, k_lib) * relevance - (1.0 - lambda) * redundancy
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    /// Chosen ids in greedy order.
    pub selected: Vec<ExemplarId>,
    /// MMR score of each pick at the step it was made.
    pub scores: Vec<f64>,
    pub lambda: f64,
    pub gamma: f64,
}

struct Slot<'a> {
    id: ExemplarId,
    exemplar: &'a Exemplar,
    relevance: f64,
    weighted: f64,
    redundancy: Option<f64>,
    taken: bool,
}

impl Slot<'_> {
    fn score(&self, lambda: f64) -> f64 {
        lambda * self.weighted - (1.0 - lambda) * self.redundancy.unwrap_or(0.0)
    }
}

/// Orders candidates best-first: score, raw relevance, source rank, id.
fn compare(a: (&Slot, f64), b: (&Slot, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| b.0.relevance.total_cmp(&a.0.relevance))
        .then_with(|| a.0.exemplar.rank.cmp(&b.0.exemplar.rank))
        .then_with(|| a.0.id.cmp(&b.0.id))
}

/// Greedily picks `min(cfg.m, |pool|)` exemplars.
///
/// Repeated ids in `pool` are considered once. An empty pool yields an empty
/// selection.
pub fn select_exemplars(
    pool: &[(ExemplarId, &Exemplar)],
    z_x: &EmbeddingVector,
    cfg: &PipelineConfig,
) -> SelectionResult {
    let (lambda, gamma) = (cfg.lambda, cfg.gamma);
    let mut seen = HashSet::new();
    let mut slots: Vec<Slot> = pool
        .iter()
        .filter(|(id, _)| seen.insert(*id))
        .map(|&(id, exemplar)| {
            let relevance = cosine_unchecked(z_x.values(), exemplar.embedding.values());
            Slot {
                id,
                exemplar,
                relevance,
                weighted: rank_weight(exemplar.rank, gamma, cfg.k_lib) * relevance,
                redundancy: None,
                taken: false,
            }
        })
        .collect();

    let steps = cfg.m.min(slots.len());
    let mut result = SelectionResult {
        selected: Vec::with_capacity(steps),
        scores: Vec::with_capacity(steps),
        lambda,
        gamma,
    };
    for _ in 0..steps {
        let best = slots
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.taken)
            .map(|(i, s)| (i, s.score(lambda)))
            .min_by(|&(i, si), &(j, sj)| compare((&slots[i], si), (&slots[j], sj)))
            .expect("steps never exceed the pool size");
        let (idx, score) = best;
        slots[idx].taken = true;
        result.selected.push(slots[idx].id);
        result.scores.push(score);

        let chosen = slots[idx].exemplar.embedding.clone();
        for s in slots.iter_mut().filter(|s| !s.taken) {
            let sim = cosine_unchecked(s.exemplar.embedding.values(), chosen.values());
            s.redundancy = Some(s.redundancy.map_or(sim, |r| r.max(sim)));
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EmbeddingVector;

    fn ex(v: &[f64], rank: u32) -> Exemplar {
        Exemplar {
            query: "q".into(),
            url: format!("https://a.example/{rank}"),
            title: "t".into(),
            description: "d".into(),
            rank,
            embedding: EmbeddingVector::normalized(v.to_vec()).unwrap(),
        }
    }

    fn cfg(m: usize, lambda: f64, gamma: f64) -> PipelineConfig {
        PipelineConfig {
            m,
            lambda,
            gamma,
            k_lib: 10,
            ..Default::default()
        }
    }

    #[test]
    fn rank_weight_examples() {
        for r in [1, 2, 5, 10, 50] {
            assert_eq!(rank_weight(r, 0.0, 10), 1.0);
        }
        assert!((rank_weight(1, 0.1, 10) - 1.1).abs() < 1e-12);
        assert_eq!(rank_weight(10, 0.1, 10), 1.0);
        assert_eq!(rank_weight(25, 0.1, 10), 1.0);
        assert!((rank_weight(1, -0.1, 10) - 0.9).abs() < 1e-12);
        // monotone in rank
        for r in 1..12 {
            assert!(rank_weight(r, 0.1, 10) >= rank_weight(r + 1, 0.1, 10));
            assert!(rank_weight(r, -0.1, 10) <= rank_weight(r + 1, -0.1, 10));
        }
        // k_lib = 1 never divides by zero
        assert_eq!(rank_weight(1, 0.5, 1), 1.0);
    }

    #[test]
    fn mmr_score_examples() {
        let z = EmbeddingVector::normalized(vec![1.0, 0.0, 0.0]).unwrap();
        let e = ex(&[1.0, 1.0, 0.0], 3);
        let rel = std::f64::consts::FRAC_1_SQRT_2;
        assert!((mmr_score(&e, &[], &z, 0.7, 0.0, 10) - 0.7 * rel).abs() < 1e-12);

        let other = ex(&[0.0, 1.0, 0.0], 1);
        assert!((mmr_score(&e, &[&other], &z, 1.0, 0.0, 10) - rel).abs() < 1e-12);

        // Hand evaluation: z=(1,0,0), e=(1,1,0)/sqrt2 at rank 1, selected
        // {(0,1,0), (0,0,1)}, lambda=0.5, gamma=0.1, k_lib=10.
        // relevance = 1/sqrt2, weight = 1.1, redundancy = max(1/sqrt2, 0) = 1/sqrt2
        // score = 0.5*1.1/sqrt2 - 0.5/sqrt2 = 0.05/sqrt2
        let e1 = ex(&[1.0, 1.0, 0.0], 1);
        let s1 = ex(&[0.0, 1.0, 0.0], 2);
        let s2 = ex(&[0.0, 0.0, 1.0], 3);
        let got = mmr_score(&e1, &[&s1, &s2], &z, 0.5, 0.1, 10);
        assert!((got - 0.05 * rel).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn trivial_pools() {
        let z = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        let r = select_exemplars(&[], &z, &cfg(3, 0.7, 0.1));
        assert!(r.selected.is_empty());

        let e = ex(&[0.5, 0.5], 4);
        let r = select_exemplars(&[(ExemplarId(9), &e)], &z, &cfg(3, 0.7, 0.1));
        assert_eq!(r.selected, vec![ExemplarId(9)]);
    }

    #[test]
    fn pure_relevance_is_top_m() {
        let z = EmbeddingVector::normalized(vec![1.0, 0.2, 0.0]).unwrap();
        let pool_ex = [
            ex(&[1.0, 0.0, 0.0], 1),
            ex(&[1.0, 0.1, 0.0], 2),
            ex(&[0.0, 1.0, 0.0], 3),
            ex(&[0.3, 0.0, 1.0], 4),
        ];
        let pool: Vec<_> = pool_ex.iter().enumerate().map(|(i, e)| (ExemplarId(i), e)).collect();
        let r = select_exemplars(&pool, &z, &cfg(3, 1.0, 0.0));
        assert_eq!(r.selected, vec![ExemplarId(1), ExemplarId(0), ExemplarId(3)]);
    }

    #[test]
    fn diversity_skips_near_duplicate() {
        let z = EmbeddingVector::normalized(vec![1.0, 1.0, 0.0]).unwrap();
        let pool_ex = [
            ex(&[1.0, 0.9, 0.0], 1),
            ex(&[1.0, 0.95, 0.0], 2),
            ex(&[0.6, 0.3, 0.5], 3),
        ];
        let pool: Vec<_> = pool_ex.iter().enumerate().map(|(i, e)| (ExemplarId(i), e)).collect();
        let r = select_exemplars(&pool, &z, &cfg(2, 0.3, 0.0));
        assert_eq!(r.selected[1], ExemplarId(2));
    }

    #[test]
    fn duplicate_ids_and_shuffles_do_not_change_result() {
        let z = EmbeddingVector::normalized(vec![1.0, 0.3, 0.2]).unwrap();
        let pool_ex = [
            ex(&[1.0, 0.0, 0.0], 1),
            ex(&[0.0, 1.0, 0.0], 2),
            ex(&[0.0, 0.0, 1.0], 3),
            ex(&[1.0, 1.0, 1.0], 4),
        ];
        let pool: Vec<_> = pool_ex.iter().enumerate().map(|(i, e)| (ExemplarId(i), e)).collect();
        let base = select_exemplars(&pool, &z, &cfg(3, 0.7, 0.1));
        let mut doubled = pool.clone();
        doubled.extend(pool.iter().copied());
        assert_eq!(select_exemplars(&doubled, &z, &cfg(3, 0.7, 0.1)), base);
        let mut rev = pool.clone();
        rev.reverse();
        assert_eq!(select_exemplars(&rev, &z, &cfg(3, 0.7, 0.1)), base);
    }

    #[test]
    fn exact_ties_fall_back_to_rank_then_id() {
        let z = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        let a = ex(&[1.0, 1.0], 5);
        let b = ex(&[1.0, 1.0], 2);
        let c = ex(&[1.0, 1.0], 2);
        let pool = vec![(ExemplarId(7), &a), (ExemplarId(4), &c), (ExemplarId(3), &b)];
        let r = select_exemplars(&pool, &z, &cfg(3, 1.0, 0.0));
        assert_eq!(r.selected, vec![ExemplarId(3), ExemplarId(4), ExemplarId(7)]);
    }
}
