//! Sentence encoders: plain RNN, RNN with mean pooling, and LSTM, each with
//! exact reverse-mode gradients. One parameter set is shared by every
//! sentence of every entity.

mod lstm;
mod rnn;

pub use lstm::{LstmGate, LstmParams};
pub use rnn::RnnParams;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{ReferenceSentence, WordFeatureTable, WordId};
use crate::numerics::{uniform_symmetric, Vector};
use crate::scalar::Scalar;

/// Which encoder architecture turns a sentence into a vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    Rnn,
    RnnPool,
    Lstm,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Rnn => "rnn",
            EncoderKind::RnnPool => "rnn-pool",
            EncoderKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rnn" => Ok(EncoderKind::Rnn),
            "rnn-pool" => Ok(EncoderKind::RnnPool),
            "lstm" => Ok(EncoderKind::Lstm),
            other => Err(Error::Config(format!("unknown encoder '{other}'"))),
        }
    }
}

/// Learned embedding per clipped position id in `[-d, d]` — exactly `2d+1`
/// rows of dimension `k_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionFeatureTable<T> {
    clip: i32,
    vectors: Vec<Vector<T>>,
}

impl<T: Scalar> PositionFeatureTable<T> {
    pub fn zeros(clip: i32, k_p: usize) -> Self {
        assert!(clip >= 1, "clip distance must be at least 1");
        PositionFeatureTable {
            clip,
            vectors: vec![Vector::zeros(k_p); (2 * clip + 1) as usize],
        }
    }

    /// Rows drawn uniformly from `[-width, width]`, in position-id order
    /// `-d..=d`.
    pub fn random(clip: i32, k_p: usize, width: f64, rng: &mut impl Rng) -> Self {
        let mut t = PositionFeatureTable::zeros(clip, k_p);
        for row in t.vectors.iter_mut() {
            for x in row.as_mut_slice() {
                *x = uniform_symmetric(rng, width);
            }
        }
        t
    }

    pub fn from_rows(clip: i32, vectors: Vec<Vector<T>>) -> Result<Self> {
        if vectors.len() != (2 * clip + 1) as usize {
            return Err(Error::Argument(format!(
                "position table needs {} rows for clip distance {clip}, got {}",
                2 * clip + 1,
                vectors.len()
            )));
        }
        Ok(PositionFeatureTable { clip, vectors })
    }

    pub fn clip(&self) -> i32 {
        self.clip
    }

    pub fn rows(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }

    pub fn vector(&self, position_id: i32) -> Result<&Vector<T>> {
        if position_id < -self.clip || position_id > self.clip {
            return Err(Error::Vocab(format!(
                "position id {position_id} outside clip range ±{}",
                self.clip
            )));
        }
        Ok(&self.vectors[(position_id + self.clip) as usize])
    }

    pub fn vector_mut(&mut self, position_id: i32) -> Result<&mut Vector<T>> {
        if position_id < -self.clip || position_id > self.clip {
            return Err(Error::Vocab(format!(
                "position id {position_id} outside clip range ±{}",
                self.clip
            )));
        }
        Ok(&mut self.vectors[(position_id + self.clip) as usize])
    }

    /// Row access by table index (0 ↦ position −d), for serialization.
    pub fn row(&self, idx: usize) -> &Vector<T> {
        &self.vectors[idx]
    }

    pub fn row_mut(&mut self, idx: usize) -> &mut Vector<T> {
        &mut self.vectors[idx]
    }
}

/// The single shared encoder parameter set of a model.
#[derive(Clone, Debug, PartialEq)]
pub enum EncoderParams<T> {
    Rnn(RnnParams<T>),
    Lstm(LstmParams<T>),
}

impl<T: Scalar> EncoderParams<T> {
    /// Fresh random parameters of the right variant for `kind`.
    pub fn random(
        kind: EncoderKind,
        k: usize,
        input_dim: usize,
        width: f64,
        rng: &mut impl Rng,
    ) -> Self {
        match kind {
            EncoderKind::Rnn | EncoderKind::RnnPool => {
                EncoderParams::Rnn(RnnParams::random(k, input_dim, width, rng))
            }
            EncoderKind::Lstm => EncoderParams::Lstm(LstmParams::random(k, input_dim, width, rng)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            EncoderParams::Rnn(p) => {
                EncoderParams::Rnn(RnnParams::zeros(p.hidden_dim(), p.input_dim()))
            }
            EncoderParams::Lstm(p) => {
                EncoderParams::Lstm(LstmParams::zeros(p.hidden_dim(), p.input_dim()))
            }
        }
    }

    pub fn supports(&self, kind: EncoderKind) -> bool {
        matches!(
            (self, kind),
            (EncoderParams::Rnn(_), EncoderKind::Rnn)
                | (EncoderParams::Rnn(_), EncoderKind::RnnPool)
                | (EncoderParams::Lstm(_), EncoderKind::Lstm)
        )
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            EncoderParams::Rnn(p) => p.hidden_dim(),
            EncoderParams::Lstm(p) => p.hidden_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            EncoderParams::Rnn(p) => p.input_dim(),
            EncoderParams::Lstm(p) => p.input_dim(),
        }
    }

    pub fn axpy(&mut self, alpha: T, other: &EncoderParams<T>) {
        match (self, other) {
            (EncoderParams::Rnn(a), EncoderParams::Rnn(b)) => a.axpy(alpha, b),
            (EncoderParams::Lstm(a), EncoderParams::Lstm(b)) => a.axpy(alpha, b),
            _ => panic!("encoder parameter variants disagree"),
        }
    }

    pub fn scale(&mut self, alpha: T) {
        match self {
            EncoderParams::Rnn(p) => p.scale(alpha),
            EncoderParams::Lstm(p) => p.scale(alpha),
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            EncoderParams::Rnn(p) => p.all_finite(),
            EncoderParams::Lstm(p) => p.all_finite(),
        }
    }

    pub fn coord_count(&self) -> usize {
        match self {
            EncoderParams::Rnn(p) => p.coord_count(),
            EncoderParams::Lstm(p) => p.coord_count(),
        }
    }

    /// Named flat views of every parameter table, in serialization order.
    pub fn table_slices(&self) -> Vec<(String, &[T])> {
        match self {
            EncoderParams::Rnn(p) => vec![
                ("encoder.w".to_string(), p.w.as_slice()),
                ("encoder.u".to_string(), p.u.as_slice()),
                ("encoder.b".to_string(), p.b.as_slice()),
            ],
            EncoderParams::Lstm(p) => {
                let mut out = Vec::with_capacity(12);
                for (name, g) in p.gates() {
                    out.push((format!("encoder.{name}.w"), g.w.as_slice()));
                    out.push((format!("encoder.{name}.u"), g.u.as_slice()));
                    out.push((format!("encoder.{name}.b"), g.b.as_slice()));
                }
                out
            }
        }
    }

    /// Mutable counterpart of [`Self::table_slices`].
    pub fn table_slices_mut(&mut self) -> Vec<(String, &mut [T])> {
        match self {
            EncoderParams::Rnn(p) => vec![
                ("encoder.w".to_string(), p.w.as_mut_slice()),
                ("encoder.u".to_string(), p.u.as_mut_slice()),
                ("encoder.b".to_string(), p.b.as_mut_slice()),
            ],
            EncoderParams::Lstm(p) => vec![
                ("encoder.input.w".to_string(), p.input.w.as_mut_slice()),
                ("encoder.input.u".to_string(), p.input.u.as_mut_slice()),
                ("encoder.input.b".to_string(), p.input.b.as_mut_slice()),
                ("encoder.forget.w".to_string(), p.forget.w.as_mut_slice()),
                ("encoder.forget.u".to_string(), p.forget.u.as_mut_slice()),
                ("encoder.forget.b".to_string(), p.forget.b.as_mut_slice()),
                ("encoder.output.w".to_string(), p.output.w.as_mut_slice()),
                ("encoder.output.u".to_string(), p.output.u.as_mut_slice()),
                ("encoder.output.b".to_string(), p.output.b.as_mut_slice()),
                ("encoder.update.w".to_string(), p.update.w.as_mut_slice()),
                ("encoder.update.u".to_string(), p.update.u.as_mut_slice()),
                ("encoder.update.b".to_string(), p.update.b.as_mut_slice()),
            ],
        }
    }
}

/// Everything the backward pass needs from a forward run: inputs, hidden
/// states (plus gate states for LSTM) and the token/position ids used to
/// route input-gradients back into the feature tables.
#[derive(Clone, Debug)]
pub struct EncoderTape<T> {
    pub kind: EncoderKind,
    pub xs: Vec<Vector<T>>,
    pub hidden: Vec<Vector<T>>,
    pub lstm: Option<LstmTape<T>>,
    pub token_ids: Vec<WordId>,
    pub position_ids: Vec<i32>,
    /// Split point between the word part and the position part of each input
    /// (0 when the tape was built from raw inputs).
    pub word_dim: usize,
}

/// Per-step gate and cell states of an LSTM run.
#[derive(Clone, Debug)]
pub struct LstmTape<T> {
    pub input_gate: Vec<Vector<T>>,
    pub forget_gate: Vec<Vector<T>>,
    pub output_gate: Vec<Vector<T>>,
    pub update: Vec<Vector<T>>,
    pub cell: Vec<Vector<T>>,
}

/// Gradients produced by [`encoder_backward`]: parameter gradients shaped
/// like the parameters, raw input gradients, and the same input gradients
/// routed to word ids / position ids (summed over repeats).
#[derive(Clone, Debug)]
pub struct EncoderBackward<T> {
    pub grads: EncoderParams<T>,
    pub inputs: Vec<Vector<T>>,
    pub words: BTreeMap<WordId, Vector<T>>,
    pub positions: BTreeMap<i32, Vector<T>>,
}

/// Builds the encoder input sequence `x_t = (word_vec ‖ position_vec)` of a
/// sentence.
pub fn embed_sentence<T: Scalar>(
    sentence: &ReferenceSentence,
    words: &WordFeatureTable<T>,
    positions: &PositionFeatureTable<T>,
) -> Result<Vec<Vector<T>>> {
    let mut xs = Vec::with_capacity(sentence.tokens.len());
    for (tok, &pos) in sentence.tokens.iter().zip(&sentence.position_ids) {
        if tok.index() >= words.len() {
            return Err(Error::Vocab(format!(
                "word id {} outside feature table of {} rows",
                tok.0,
                words.len()
            )));
        }
        let w = words.vector(*tok);
        let p = positions.vector(pos)?;
        xs.push(Vector::concat(&[w, p]));
    }
    Ok(xs)
}

/// `h_t = tanh(W x_t + U h_{t-1} + b)` from zero state; returns `h_n`.
pub fn rnn_forward<T: Scalar>(
    p: &RnnParams<T>,
    xs: &[Vector<T>],
) -> Result<(Vector<T>, EncoderTape<T>)> {
    rnn::rnn_run(p, xs, false)
}

/// Same recurrence, but the output is the mean of all hidden states.
pub fn rnn_pool_forward<T: Scalar>(
    p: &RnnParams<T>,
    xs: &[Vector<T>],
) -> Result<(Vector<T>, EncoderTape<T>)> {
    rnn::rnn_run(p, xs, true)
}

/// Gated recurrence from zero state; returns `h_n`.
pub fn lstm_forward<T: Scalar>(
    p: &LstmParams<T>,
    xs: &[Vector<T>],
) -> Result<(Vector<T>, EncoderTape<T>)> {
    lstm::lstm_run(p, xs)
}

/// Embeds a sentence and runs the encoder selected by `kind`, recording the
/// token/position ids on the tape for gradient routing.
pub fn encode_sentence<T: Scalar>(
    params: &EncoderParams<T>,
    kind: EncoderKind,
    sentence: &ReferenceSentence,
    words: &WordFeatureTable<T>,
    positions: &PositionFeatureTable<T>,
) -> Result<(Vector<T>, EncoderTape<T>)> {
    if !params.supports(kind) {
        return Err(Error::Usage(format!(
            "encoder parameters do not support kind '{}'",
            kind.as_str()
        )));
    }
    let xs = embed_sentence(sentence, words, positions)?;
    let (out, mut tape) = match (params, kind) {
        (EncoderParams::Rnn(p), EncoderKind::Rnn) => rnn_forward(p, &xs)?,
        (EncoderParams::Rnn(p), EncoderKind::RnnPool) => rnn_pool_forward(p, &xs)?,
        (EncoderParams::Lstm(p), EncoderKind::Lstm) => lstm_forward(p, &xs)?,
        _ => unreachable!("guarded by supports()"),
    };
    tape.token_ids = sentence.tokens.clone();
    tape.position_ids = sentence.position_ids.clone();
    tape.word_dim = words.dim();
    Ok((out, tape))
}

/// Exact reverse-mode gradients of the recorded forward pass with respect to
/// parameters and inputs. For the pooled variant the upstream gradient is
/// spread as `upstream/n` over every hidden state before unrolling.
pub fn encoder_backward<T: Scalar>(
    params: &EncoderParams<T>,
    tape: &EncoderTape<T>,
    upstream: &Vector<T>,
) -> Result<EncoderBackward<T>> {
    if !params.supports(tape.kind) {
        return Err(Error::Usage(format!(
            "tape was recorded by a '{}' encoder, parameters are of the other variant",
            tape.kind.as_str()
        )));
    }
    if upstream.len() != params.hidden_dim() {
        return Err(Error::Usage(format!(
            "upstream gradient has length {}, hidden dimension is {}",
            upstream.len(),
            params.hidden_dim()
        )));
    }
    let (grads, inputs) = match (params, tape.kind) {
        (EncoderParams::Rnn(p), EncoderKind::Rnn | EncoderKind::RnnPool) => {
            let (g, dx) = rnn::rnn_backward(p, tape, upstream);
            (EncoderParams::Rnn(g), dx)
        }
        (EncoderParams::Lstm(p), EncoderKind::Lstm) => {
            let (g, dx) = lstm::lstm_backward(p, tape, upstream);
            (EncoderParams::Lstm(g), dx)
        }
        _ => unreachable!("guarded by supports()"),
    };

    let mut words: BTreeMap<WordId, Vector<T>> = BTreeMap::new();
    let mut positions: BTreeMap<i32, Vector<T>> = BTreeMap::new();
    if !tape.token_ids.is_empty() {
        let kw = tape.word_dim;
        for (t, dx) in inputs.iter().enumerate() {
            let word_part = Vector::from_vec(dx.as_slice()[..kw].to_vec());
            let pos_part = Vector::from_vec(dx.as_slice()[kw..].to_vec());
            words
                .entry(tape.token_ids[t])
                .and_modify(|v| v.add_assign(&word_part))
                .or_insert(word_part);
            positions
                .entry(tape.position_ids[t])
                .and_modify(|v| v.add_assign(&pos_part))
                .or_insert(pos_part);
        }
    }
    Ok(EncoderBackward {
        grads,
        inputs,
        words,
        positions,
    })
}

#[cfg(test)]
mod tests;
