use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::graph::{KnowledgeGraph, Split, Triple};
use crate::kg::ids::{EntityId, WordId};
use crate::kg::text::{ReferenceCorpus, ReferenceSentence};

/// Size parameters of a synthetic desk-scale dataset.
#[derive(Clone, Copy, Debug)]
pub struct SynthSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
    /// Sentences per entity whose tokens reflect the entity's graph
    /// neighborhood.
    pub signal_sentences: usize,
    /// Sentences per entity made of uniformly random tokens.
    pub noise_sentences: usize,
    pub sentence_length: usize,
    pub vocab_size: usize,
    /// Position-id clip distance used for the generated corpus.
    pub clip_distance: i32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_entities: 30,
            n_relations: 4,
            n_triples: 120,
            signal_sentences: 1,
            noise_sentences: 2,
            sentence_length: 8,
            vocab_size: 60,
            clip_distance: 10,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n_entities == 0
            || self.n_relations == 0
            || self.n_triples == 0
            || self.sentence_length == 0
            || self.vocab_size == 0
        {
            return Err(Error::Argument(
                "synthetic spec counts must be positive".to_string(),
            ));
        }
        if self.signal_sentences == 0 && self.noise_sentences == 0 {
            return Err(Error::Argument(
                "synthetic spec must request at least one sentence per entity".to_string(),
            ));
        }
        if self.clip_distance < 1 {
            return Err(Error::Argument(
                "clip distance must be at least 1".to_string(),
            ));
        }
        let capacity =
            self.n_entities as u128 * self.n_entities as u128 * self.n_relations as u128;
        if self.n_triples as u128 > capacity {
            return Err(Error::Infeasible(format!(
                "{} triples requested but only {} distinct (head, relation, tail) combinations exist",
                self.n_triples, capacity
            )));
        }
        Ok(())
    }
}

/// Builds a random knowledge graph plus a matching reference corpus, fully
/// reproducible from `seed`.
///
/// Triples are distinct and split 80/10/10 (train gets the remainder).
/// Signal sentences draw their tokens from the entity's train-neighborhood —
/// the partner entity's name followed by the relation name, for each incident
/// train triple — so signal text mentions graph neighbors the same way the
/// entity itself is named in its own sentences. Noise sentences use uniformly
/// random synthetic tokens. Every sentence carries the entity name at a
/// randomly drawn anchor.
pub fn generate_synthetic_dataset(
    spec: &SynthSpec,
    seed: u64,
) -> Result<(KnowledgeGraph, ReferenceCorpus)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut kg = KnowledgeGraph::new();
    for e in 0..spec.n_entities {
        kg.entities.intern(&format!("e{e}"));
    }
    for r in 0..spec.n_relations {
        kg.relations.intern(&format!("r{r}"));
    }

    let triples = sample_distinct_triples(spec, &mut rng);
    let n_valid = spec.n_triples / 10;
    let n_test = spec.n_triples / 10;
    for (i, t) in triples.into_iter().enumerate() {
        let split = if i < n_valid {
            Split::Valid
        } else if i < n_valid + n_test {
            Split::Test
        } else {
            Split::Train
        };
        kg.add_triple(split, t);
    }
    kg.validate()?;

    let per_entity = spec.signal_sentences + spec.noise_sentences;
    let mut corpus = ReferenceCorpus::new(spec.n_entities, per_entity);
    for e in 0..spec.n_entities as u32 {
        let entity = EntityId(e);
        let pool = neighborhood_tokens(&kg, entity, spec);
        for j in 0..spec.signal_sentences {
            let anchor = rng.random_range(0..spec.sentence_length);
            let mut words = Vec::with_capacity(spec.sentence_length);
            for t in 0..spec.sentence_length {
                if t == anchor {
                    words.push(format!("e{e}"));
                } else {
                    words.push(format!("w{}", pool[(t + j) % pool.len()]));
                }
            }
            push_sentence(&mut corpus, entity, &words, anchor, spec.clip_distance)?;
        }
        for _ in 0..spec.noise_sentences {
            let anchor = rng.random_range(0..spec.sentence_length);
            let mut words = Vec::with_capacity(spec.sentence_length);
            for t in 0..spec.sentence_length {
                if t == anchor {
                    words.push(format!("e{e}"));
                } else {
                    words.push(format!("w{}", rng.random_range(0..spec.vocab_size)));
                }
            }
            push_sentence(&mut corpus, entity, &words, anchor, spec.clip_distance)?;
        }
    }
    Ok((kg, corpus))
}

fn push_sentence(
    corpus: &mut ReferenceCorpus,
    entity: EntityId,
    words: &[String],
    anchor: usize,
    d: i32,
) -> Result<()> {
    let tokens: Vec<WordId> = words
        .iter()
        .map(|w| WordId(corpus.vocab.intern(w)))
        .collect();
    corpus.push(ReferenceSentence::new(entity, tokens, anchor, d)?);
    Ok(())
}

/// Token indices an entity's signal sentences cycle through: one per incident
/// train triple, derived from the partner entity and the relation.
fn neighborhood_tokens(kg: &KnowledgeGraph, entity: EntityId, spec: &SynthSpec) -> Vec<usize> {
    let mut pool = Vec::new();
    let mut seen = HashSet::new();
    let r_count = spec.n_relations as u64;
    for t in kg.train() {
        let partner = if t.head == entity {
            Some(t.tail)
        } else if t.tail == entity {
            Some(t.head)
        } else {
            None
        };
        if let Some(p) = partner {
            let token = ((p.0 as u64 * r_count + t.relation.0 as u64)
                % spec.vocab_size as u64) as usize;
            if seen.insert(token) {
                pool.push(token);
            }
        }
    }
    if pool.is_empty() {
        pool.push(entity.index() % spec.vocab_size);
    }
    pool
}

fn sample_distinct_triples(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Triple> {
    let ne = spec.n_entities as u64;
    let nr = spec.n_relations as u64;
    let capacity = ne as u128 * ne as u128 * nr as u128;
    if capacity <= 2_000_000 {
        let mut all: Vec<u64> = (0..capacity as u64).collect();
        all.shuffle(rng);
        all.truncate(spec.n_triples);
        all.into_iter()
            .map(|idx| {
                let h = idx / (nr * ne);
                let r = (idx / ne) % nr;
                let t = idx % ne;
                Triple::new(h as u32, r as u32, t as u32)
            })
            .collect()
    } else {
        let mut seen = HashSet::with_capacity(spec.n_triples);
        let mut out = Vec::with_capacity(spec.n_triples);
        while out.len() < spec.n_triples {
            let t = Triple::new(
                rng.random_range(0..ne) as u32,
                rng.random_range(0..nr) as u32,
                rng.random_range(0..ne) as u32,
            );
            if seen.insert(t) {
                out.push(t);
            }
        }
        out
    }
}
