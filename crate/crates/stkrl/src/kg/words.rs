use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::ids::{IdTable, WordId};
use crate::numerics::{uniform_symmetric, Vector};
use crate::scalar::Scalar;

/// Where a word vector came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WordSource {
    Loaded,
    Random,
}

/// One feature vector per vocabulary word, all of dimension `k_w`.
#[derive(Clone, Debug, PartialEq)]
pub struct WordFeatureTable<T> {
    dim: usize,
    vectors: Vec<Vector<T>>,
    sources: Vec<WordSource>,
}

impl<T: Scalar> WordFeatureTable<T> {
    /// Fresh table with every word drawn uniformly from `[-6/√k_w, 6/√k_w]`.
    pub fn random(n_words: usize, k_w: usize, rng: &mut impl Rng) -> Self {
        let width = 6.0 / (k_w as f64).sqrt();
        let vectors = (0..n_words)
            .map(|_| {
                Vector::from_vec((0..k_w).map(|_| uniform_symmetric(rng, width)).collect())
            })
            .collect();
        WordFeatureTable {
            dim: k_w,
            vectors,
            sources: vec![WordSource::Random; n_words],
        }
    }

    pub fn from_parts(dim: usize, vectors: Vec<Vector<T>>, sources: Vec<WordSource>) -> Self {
        assert_eq!(vectors.len(), sources.len());
        WordFeatureTable {
            dim,
            vectors,
            sources,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, w: WordId) -> &Vector<T> {
        &self.vectors[w.index()]
    }

    pub fn vector_mut(&mut self, w: WordId) -> &mut Vector<T> {
        &mut self.vectors[w.index()]
    }

    pub fn source(&self, w: WordId) -> WordSource {
        self.sources[w.index()]
    }

    pub fn sources(&self) -> &[WordSource] {
        &self.sources
    }
}

/// Loads pre-trained word vectors for `vocab`.
///
/// File lines are `word v_1 … v_{k_w}` (whitespace-separated). Words missing
/// from the file fall back to seeded uniform draws from `[-6/√k_w, 6/√k_w]`,
/// taken in word-id order so results are reproducible. Every line must carry
/// exactly `k_w` values, whether or not the word is in `vocab`.
pub fn load_word_vectors<T: Scalar>(
    path: impl AsRef<Path>,
    vocab: &IdTable,
    k_w: usize,
    rng: &mut impl Rng,
) -> Result<WordFeatureTable<T>> {
    let file = File::open(path.as_ref())?;
    load_word_vectors_from(BufReader::new(file), vocab, k_w, rng)
}

/// Same as [`load_word_vectors`] but from any buffered reader.
pub fn load_word_vectors_from<T: Scalar>(
    reader: impl BufRead,
    vocab: &IdTable,
    k_w: usize,
    rng: &mut impl Rng,
) -> Result<WordFeatureTable<T>> {
    let mut loaded: HashMap<String, Vec<T>> = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line has a first field");
        let values: Vec<&str> = fields.collect();
        if values.len() != k_w {
            return Err(Error::Format(format!(
                "line {lineno}: expected {k_w} values for '{word}', found {}",
                values.len()
            )));
        }
        let mut vec = Vec::with_capacity(k_w);
        for v in values {
            let x: f64 = v.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad float '{v}'"),
            })?;
            vec.push(crate::scalar::real::<T>(x));
        }
        loaded.insert(word.to_string(), vec);
    }

    let width = 6.0 / (k_w as f64).sqrt();
    let mut vectors = Vec::with_capacity(vocab.len());
    let mut sources = Vec::with_capacity(vocab.len());
    for id in 0..vocab.len() as u32 {
        match loaded.get(vocab.name(id)) {
            Some(v) => {
                vectors.push(Vector::from_vec(v.clone()));
                sources.push(WordSource::Loaded);
            }
            None => {
                vectors.push(Vector::from_vec(
                    (0..k_w).map(|_| uniform_symmetric(rng, width)).collect(),
                ));
                sources.push(WordSource::Random);
            }
        }
    }
    Ok(WordFeatureTable {
        dim: k_w,
        vectors,
        sources,
    })
}
