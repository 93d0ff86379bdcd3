//! The joint embedding model: learned tables, translation energies, ranking
//! loss with negative sampling, text representations built from reference
//! sentences, and binary checkpoints.

pub mod checkpoint;
pub mod energy;
pub mod hyper;
pub mod loss;
pub mod params;
pub mod text;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use energy::{energy_term, energy_term_with_grad, energy_total};
pub use hyper::{AggregationMode, EnergyMode, HyperParams, LossMode};
pub use loss::{margin_loss, sample_negative, CorruptSide, CorruptedTriple};
pub use params::ModelParams;
pub use text::{build_text_representation, rank_sentences, score_sentences};
