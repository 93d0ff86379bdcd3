//! Knowledge-graph data layer: triples, vocabularies, reference sentences,
//! word features and the synthetic dataset generator.

mod graph;
mod ids;
mod synth;
mod text;
mod words;

pub use graph::{load_triples, load_triples_from, KnowledgeGraph, Split, Triple};
pub use ids::{EntityId, IdTable, RelationId, WordId};
pub use synth::{generate_synthetic_dataset, SynthSpec};
pub use text::{
    collapsed_name, compute_position_ids, extract_reference_sentences, load_corpus,
    load_corpus_from, save_corpus, ReferenceCorpus, ReferenceSentence,
};
pub use words::{load_word_vectors, load_word_vectors_from, WordFeatureTable, WordSource};
