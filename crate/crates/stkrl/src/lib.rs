//! Joint embedding of knowledge-graph entities and their textual mentions.
//!
//! Entities get two representations: a free structural vector and a text
//! vector built by encoding reference sentences with a shared recurrent
//! encoder and aggregating them under similarity-based attention. Relations
//! act as translations between representations, and training minimizes a
//! margin ranking loss over corrupted triples.
//!
//! The crate is generic over the scalar type (see [`scalar::Scalar`]);
//! `f64`-concrete aliases are exported at the root.

pub mod attention;
pub mod encoders;
pub mod error;
pub mod evaluator;
pub mod kg;
pub mod model;
pub mod numerics;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default-precision vector.
pub type VectorF = numerics::Vector<f64>;
/// Default-precision matrix.
pub type MatrixF = numerics::Matrix<f64>;
