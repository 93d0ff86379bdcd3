//! Similarity-based attention over a entity's sentence representations:
//! score by cosine against the structural embedding, keep the top-m, and
//! aggregate with clamped normalized weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{clamp_min, cosine, Vector};
use crate::scalar::{real, Scalar};

/// Attention hyperparameters: how many sentences to keep and the positive
/// floor applied to weights before normalizing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub top_m: usize,
    pub epsilon: f64,
}

impl AttentionConfig {
    pub fn new(top_m: usize, epsilon: f64) -> Result<Self> {
        let cfg = AttentionConfig { top_m, epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_m < 1 {
            return Err(Error::Config("attention top-m must be ≥ 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "attention epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            top_m: 5,
            epsilon: 1e-6,
        }
    }
}

/// A sentence representation together with its index in the entity's
/// sentence list and its attention score against `e_K`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSentence<T> {
    pub index: usize,
    pub repr: Vector<T>,
    pub score: T,
}

/// Cosine similarity between a sentence representation and the entity's
/// structural embedding; 0 when either vector is zero.
pub fn attention_score<T: Scalar>(c: &Vector<T>, e_k: &Vector<T>) -> Result<T> {
    cosine(c, e_k)
}

/// Full ordering of scored sentences: descending score, ties broken by the
/// lower sentence index. Returns `(index, score)` pairs.
pub fn rank_scored<T: Scalar>(scored: &[ScoredSentence<T>]) -> Vec<(usize, T)> {
    let mut order: Vec<(usize, T)> = scored.iter().map(|s| (s.index, s.score)).collect();
    order.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    order
}

/// Indices of the `min(m, len)` highest-scoring sentences, descending, ties
/// to the lower index. A prefix of [`rank_scored`]'s ordering by construction.
pub fn select_top_m<T: Scalar>(scored: &[ScoredSentence<T>], m: usize) -> Vec<usize> {
    rank_scored(scored)
        .into_iter()
        .take(m)
        .map(|(idx, _)| idx)
        .collect()
}

/// Clamped, normalized attention weights: `w_i = max(score_i, ε) / Σ_j max(score_j, ε)`.
pub fn normalized_weights<T: Scalar>(scores: &[T], epsilon: f64) -> Vec<T> {
    let eps = real::<T>(epsilon);
    let clamped: Vec<T> = scores.iter().map(|&s| clamp_min(s, eps)).collect();
    let total: T = clamped.iter().copied().sum();
    clamped.into_iter().map(|w| w / total).collect()
}

/// Weighted aggregation `s = Σ w_i c_i / Σ w_i` over the selected sentences,
/// with each weight clamped to at least `epsilon` so the combination is
/// always convex. When all scores are positive the clamp is inert.
pub fn aggregate_attention<T: Scalar>(
    selected: &[ScoredSentence<T>],
    epsilon: f64,
) -> Result<Vector<T>> {
    if selected.is_empty() {
        return Err(Error::Usage(
            "cannot aggregate an empty sentence selection".into(),
        ));
    }
    let scores: Vec<T> = selected.iter().map(|s| s.score).collect();
    let weights = normalized_weights(&scores, epsilon);
    let mut out = Vector::zeros(selected[0].repr.len());
    for (s, &w) in selected.iter().zip(&weights) {
        out.axpy(w, &s.repr);
    }
    Ok(out)
}

/// Plain arithmetic mean of sentence representations (the no-attention
/// ablation).
pub fn aggregate_mean<T: Scalar>(all: &[Vector<T>]) -> Result<Vector<T>> {
    if all.is_empty() {
        return Err(Error::Usage("cannot average zero representations".into()));
    }
    let mut out = Vector::zeros(all[0].len());
    for v in all {
        out.add_assign(v);
    }
    out.scale(T::one() / real::<T>(all.len() as f64));
    Ok(out)
}

/// Clones the scored sentences named by `chosen`, in that order.
pub fn take_selected<T: Scalar>(
    scored: &[ScoredSentence<T>],
    chosen: &[usize],
) -> Vec<ScoredSentence<T>> {
    chosen
        .iter()
        .map(|&idx| {
            scored
                .iter()
                .find(|s| s.index == idx)
                .expect("chosen index refers to a scored sentence")
                .clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(entries: &[(usize, &[f64], f64)]) -> Vec<ScoredSentence<f64>> {
        entries
            .iter()
            .map(|(i, v, s)| ScoredSentence {
                index: *i,
                repr: Vector::from_vec(v.to_vec()),
                score: *s,
            })
            .collect()
    }

    #[test]
    fn score_matches_cosine_reference_points() {
        let e = Vector::from_vec(vec![1.0f64, 1.0]);
        assert!((attention_score(&e, &e).unwrap() - 1.0).abs() < 1e-12);
        assert!((attention_score(&e.scaled(-1.0), &e).unwrap() + 1.0).abs() < 1e-12);
        let c = Vector::from_vec(vec![1.0f64, 0.0]);
        assert!((attention_score(&c, &e).unwrap() - 0.70710678).abs() < 1e-8);
        let bad = Vector::from_vec(vec![1.0f64]);
        assert!(matches!(
            attention_score(&bad, &e),
            Err(crate::Error::Usage(_))
        ));
    }

    #[test]
    fn top_m_selects_highest_scores_with_index_tie_break() {
        let list = scored(&[(0, &[1.0], 0.2), (1, &[1.0], 0.9), (2, &[1.0], 0.5)]);
        assert_eq!(select_top_m(&list, 2), vec![1, 2]);
        let short = scored(&[(0, &[1.0], 0.1), (1, &[1.0], 0.3)]);
        assert_eq!(select_top_m(&short, 5), vec![1, 0]);
        let tied = scored(&[(0, &[1.0], 0.5), (1, &[1.0], 0.5)]);
        assert_eq!(select_top_m(&tied, 1), vec![0]);
    }

    #[test]
    fn aggregation_reproduces_the_weighted_average() {
        let one = scored(&[(0, &[0.3, -0.7], 0.42)]);
        let s = aggregate_attention(&one, 1e-6).unwrap();
        assert_eq!(s, one[0].repr);

        let two = scored(&[(0, &[1.0, 0.0], 0.8), (1, &[0.0, 1.0], 0.2)]);
        let s = aggregate_attention(&two, 1e-6).unwrap();
        assert!((s[0] - 0.8).abs() < 1e-12);
        assert!((s[1] - 0.2).abs() < 1e-12);

        // all scores non-positive → clamp equalizes the weights
        let neg = scored(&[(0, &[1.0, 0.0], -0.4), (1, &[0.0, 1.0], 0.0)]);
        let s = aggregate_attention(&neg, 1e-6).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-12);
        assert!((s[1] - 0.5).abs() < 1e-12);

        assert!(matches!(
            aggregate_attention::<f64>(&[], 1e-6),
            Err(crate::Error::Usage(_))
        ));
    }

    #[test]
    fn mean_aggregation_examples() {
        let a = Vector::from_vec(vec![1.0f64, 0.0]);
        let b = Vector::from_vec(vec![0.0f64, 1.0]);
        let m = aggregate_mean(&[a.clone(), b]).unwrap();
        assert_eq!(m.as_slice(), &[0.5, 0.5]);
        let single = aggregate_mean(&[a.clone()]).unwrap();
        assert_eq!(single, a);
        let same = aggregate_mean(&[a.clone(), a.clone(), a.clone()]).unwrap();
        assert_eq!(same, a);
        assert!(aggregate_mean::<f64>(&[]).is_err());
    }

    #[test]
    fn selection_is_a_prefix_of_the_full_ranking() {
        let list = scored(&[
            (0, &[1.0], 0.1),
            (1, &[1.0], 0.9),
            (2, &[1.0], 0.9),
            (3, &[1.0], -0.4),
        ]);
        let full: Vec<usize> = rank_scored(&list).into_iter().map(|(i, _)| i).collect();
        assert_eq!(full, vec![1, 2, 0, 3]);
        for m in 1..=4 {
            assert_eq!(select_top_m(&list, m), full[..m].to_vec());
        }
    }

    #[test]
    fn ranking_is_scale_invariant_in_e_k() {
        let e = Vector::from_vec(vec![0.4f64, -1.0, 0.3]);
        let reprs = [
            Vector::from_vec(vec![0.2f64, 0.5, -0.1]),
            Vector::from_vec(vec![-0.3f64, 0.8, 0.9]),
            Vector::from_vec(vec![1.0f64, 0.0, 0.0]),
        ];
        let rank_for = |ek: &Vector<f64>| {
            let list: Vec<_> = reprs
                .iter()
                .enumerate()
                .map(|(i, c)| ScoredSentence {
                    index: i,
                    repr: c.clone(),
                    score: attention_score(c, ek).unwrap(),
                })
                .collect();
            rank_scored(&list)
                .into_iter()
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        };
        assert_eq!(rank_for(&e), rank_for(&e.scaled(7.25)));
    }
}
