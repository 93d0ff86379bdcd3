use crate::encoders::{EncoderParams, PositionFeatureTable};
use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId, WordFeatureTable};
use crate::model::hyper::HyperParams;
use crate::numerics::Vector;
use crate::scalar::Scalar;

/// Every learned table of the model plus its hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    /// Structural entity embeddings (k per entity).
    pub entity_struct: Vec<Vector<T>>,
    /// Relation translation vectors (k per relation).
    pub relation: Vec<Vector<T>>,
    pub words: WordFeatureTable<T>,
    pub positions: PositionFeatureTable<T>,
    /// The single encoder parameter set shared by all sentences.
    pub encoder: EncoderParams<T>,
    pub hyper: HyperParams,
}

impl<T: Scalar> ModelParams<T> {
    pub fn n_entities(&self) -> usize {
        self.entity_struct.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relation.len()
    }

    pub fn entity(&self, e: EntityId) -> &Vector<T> {
        &self.entity_struct[e.index()]
    }

    pub fn entity_mut(&mut self, e: EntityId) -> &mut Vector<T> {
        &mut self.entity_struct[e.index()]
    }

    pub fn relation_vec(&self, r: RelationId) -> &Vector<T> {
        &self.relation[r.index()]
    }

    pub fn relation_vec_mut(&mut self, r: RelationId) -> &mut Vector<T> {
        &mut self.relation[r.index()]
    }

    /// Structural consistency of every table against the hyperparameters.
    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        h.validate()?;
        for (i, v) in self.entity_struct.iter().enumerate() {
            if v.len() != h.k {
                return Err(Error::Config(format!(
                    "entity vector {i} has dimension {}, expected k={}",
                    v.len(),
                    h.k
                )));
            }
        }
        for (i, v) in self.relation.iter().enumerate() {
            if v.len() != h.k {
                return Err(Error::Config(format!(
                    "relation vector {i} has dimension {}, expected k={}",
                    v.len(),
                    h.k
                )));
            }
        }
        if self.words.dim() != h.k_w {
            return Err(Error::Config(format!(
                "word table dimension {} disagrees with k_w={}",
                self.words.dim(),
                h.k_w
            )));
        }
        if self.positions.dim() != h.k_p {
            return Err(Error::Config(format!(
                "position table dimension {} disagrees with k_p={}",
                self.positions.dim(),
                h.k_p
            )));
        }
        if self.positions.clip() != h.clip_distance {
            return Err(Error::Config(format!(
                "position table clip {} disagrees with d={}",
                self.positions.clip(),
                h.clip_distance
            )));
        }
        if self.encoder.hidden_dim() != h.k || self.encoder.input_dim() != h.input_dim() {
            return Err(Error::Config(format!(
                "encoder shapes ({} hidden, {} input) disagree with k={}, k_w+k_p={}",
                self.encoder.hidden_dim(),
                self.encoder.input_dim(),
                h.k,
                h.input_dim()
            )));
        }
        if !self.encoder.supports(self.hyper.encoder) {
            return Err(Error::Config(format!(
                "encoder parameters do not match configured kind '{}'",
                self.hyper.encoder.as_str()
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.entity_struct.iter().all(|v| v.all_finite())
            && self.relation.iter().all(|v| v.all_finite())
            && (0..self.words.len())
                .all(|w| self.words.vector(crate::kg::WordId(w as u32)).all_finite())
            && (0..self.positions.rows()).all(|i| self.positions.row(i).all_finite())
            && self.encoder.all_finite()
    }

    /// Canonical flat-table layout: `(label, coordinate count)` in the order
    /// entity_struct, relation, words, positions, encoder tables. Gradient
    /// checking and serialization both walk this order.
    pub fn flat_layout(&self) -> Vec<(String, usize)> {
        let h = &self.hyper;
        let mut out = vec![
            ("entity_struct".to_string(), self.entity_struct.len() * h.k),
            ("relation".to_string(), self.relation.len() * h.k),
            ("words".to_string(), self.words.len() * h.k_w),
            ("positions".to_string(), self.positions.rows() * h.k_p),
        ];
        for (name, slice) in self.encoder.table_slices() {
            out.push((name, slice.len()));
        }
        out
    }

    /// Reads coordinate `offset` of the flat table with index `table` in
    /// [`Self::flat_layout`] order.
    pub fn get_flat(&self, table: usize, offset: usize) -> T {
        match table {
            0 => {
                let k = self.hyper.k;
                self.entity_struct[offset / k][offset % k]
            }
            1 => {
                let k = self.hyper.k;
                self.relation[offset / k][offset % k]
            }
            2 => {
                let kw = self.hyper.k_w;
                self.words.vector(crate::kg::WordId((offset / kw) as u32))[offset % kw]
            }
            3 => {
                let kp = self.hyper.k_p;
                self.positions.row(offset / kp)[offset % kp]
            }
            n => {
                let slices = self.encoder.table_slices();
                slices[n - 4].1[offset]
            }
        }
    }

    /// Writes coordinate `offset` of flat table `table`.
    pub fn set_flat(&mut self, table: usize, offset: usize, value: T) {
        match table {
            0 => {
                let k = self.hyper.k;
                self.entity_struct[offset / k][offset % k] = value;
            }
            1 => {
                let k = self.hyper.k;
                self.relation[offset / k][offset % k] = value;
            }
            2 => {
                let kw = self.hyper.k_w;
                self.words.vector_mut(crate::kg::WordId((offset / kw) as u32))[offset % kw] =
                    value;
            }
            3 => {
                let kp = self.hyper.k_p;
                self.positions.row_mut(offset / kp)[offset % kp] = value;
            }
            n => {
                let mut slices = self.encoder.table_slices_mut();
                slices[n - 4].1[offset] = value;
            }
        }
    }
}
