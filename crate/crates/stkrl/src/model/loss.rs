use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, Triple};
use crate::scalar::Scalar;

/// Which entity slot of a triple was replaced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorruptSide {
    Head,
    Tail,
}

/// A corrupted triple: the source with exactly one entity slot replaced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorruptedTriple {
    pub triple: Triple,
    pub side: CorruptSide,
}

impl CorruptedTriple {
    /// The replacement entity.
    pub fn corrupted_entity(&self) -> EntityId {
        match self.side {
            CorruptSide::Head => self.triple.head,
            CorruptSide::Tail => self.triple.tail,
        }
    }
}

/// Margin ranking hinge `max(γ + pos − neg, 0)`.
pub fn margin_loss<T: Scalar>(pos: T, neg: T, gamma: T) -> T {
    let v = gamma + pos - neg;
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

/// Draws a corruption of `t`: with probability 1/2 the head is replaced,
/// otherwise the tail, by an entity uniform over the graph. Resamples (up to
/// 100 attempts) until the corrupted triple is not a training triple and the
/// replacement differs from the original entity; deterministic under the
/// caller's seeded generator.
pub fn sample_negative(
    t: &Triple,
    kg: &KnowledgeGraph,
    rng: &mut impl Rng,
) -> Result<CorruptedTriple> {
    let n = kg.n_entities() as u32;
    if n < 2 {
        return Err(Error::Sampling(
            "negative sampling needs at least 2 entities".into(),
        ));
    }
    for _ in 0..100 {
        let head_side = rng.random_range(0..2u32) == 0;
        let replacement = EntityId(rng.random_range(0..n));
        let (candidate, side) = if head_side {
            (
                Triple {
                    head: replacement,
                    ..*t
                },
                CorruptSide::Head,
            )
        } else {
            (
                Triple {
                    tail: replacement,
                    ..*t
                },
                CorruptSide::Tail,
            )
        };
        let original = if head_side { t.head } else { t.tail };
        if replacement != original && !kg.in_train(&candidate) {
            return Ok(CorruptedTriple {
                triple: candidate,
                side,
            });
        }
    }
    Err(Error::Sampling(format!(
        "no valid corruption of ({}, {}, {}) found in 100 attempts",
        t.head.0, t.relation.0, t.tail.0
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{load_triples_from, Split};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    fn toy_graph() -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        let data = "a\tr\tb\nb\tr\tc\nc\tr\td\nd\tr\ta";
        load_triples_from(Cursor::new(data), &mut kg, Split::Train).unwrap();
        kg
    }

    #[test]
    fn hinge_examples() {
        assert!((margin_loss(0.2f64, 0.9, 1.0) - 0.3).abs() < 1e-15);
        assert_eq!(margin_loss(0.2f64, 1.5, 1.0), 0.0);
        assert_eq!(margin_loss(0.7f64, 0.7, 1.0), 1.0);
    }

    #[test]
    fn hinge_is_nonnegative_and_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let pos: f64 = rng.random_range(-3.0..3.0);
            let neg: f64 = rng.random_range(-3.0..3.0);
            let delta: f64 = rng.random_range(-0.5..0.5);
            let gamma = 1.0;
            let base = margin_loss(pos, neg, gamma);
            assert!(base >= 0.0);
            assert!((margin_loss(pos + delta, neg, gamma) - base).abs() <= delta.abs() + 1e-12);
            assert!((margin_loss(pos, neg + delta, gamma) - base).abs() <= delta.abs() + 1e-12);
        }
    }

    #[test]
    fn corruption_replaces_exactly_one_slot_and_avoids_train_triples() {
        let kg = toy_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = kg.train()[0];
        for _ in 0..100 {
            let neg = sample_negative(&t, &kg, &mut rng).unwrap();
            assert!(!kg.in_train(&neg.triple));
            match neg.side {
                CorruptSide::Head => {
                    assert_ne!(neg.triple.head, t.head);
                    assert_eq!(neg.triple.tail, t.tail);
                    assert_eq!(neg.triple.relation, t.relation);
                }
                CorruptSide::Tail => {
                    assert_ne!(neg.triple.tail, t.tail);
                    assert_eq!(neg.triple.head, t.head);
                    assert_eq!(neg.triple.relation, t.relation);
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let kg = toy_graph();
        let t = kg.train()[1];
        let seq = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| sample_negative(&t, &kg, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(7), seq(7));
        assert_ne!(seq(7), seq(8));
    }

    #[test]
    fn saturated_graphs_exhaust_sampling() {
        // 2 entities, 1 relation, all 4 possible triples in train.
        let mut kg = KnowledgeGraph::new();
        let data = "a\tr\ta\na\tr\tb\nb\tr\ta\nb\tr\tb";
        load_triples_from(Cursor::new(data), &mut kg, Split::Train).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = sample_negative(&kg.train()[0], &kg, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Sampling(_)));
    }
}
