use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::encoders::EncoderKind;
use crate::error::{Error, Result};
use crate::numerics::NormKind;

/// Whether the model uses the full four-term energy or collapses to the
/// structure-only baseline (text representations pinned to the structural
/// ones).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyMode {
    Full,
    TransEOnly,
}

impl EnergyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EnergyMode::Full => "full",
            EnergyMode::TransEOnly => "transE-only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(EnergyMode::Full),
            "transE-only" | "transe-only" => Ok(EnergyMode::TransEOnly),
            other => Err(Error::Config(format!("unknown energy mode '{other}'"))),
        }
    }
}

/// How hinges are formed per positive triple: one hinge per energy term with
/// its own negative, or a single hinge on the summed energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    FourHinges,
    Summed,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::FourHinges => "four-hinges",
            LossMode::Summed => "summed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "four-hinges" => Ok(LossMode::FourHinges),
            "summed" => Ok(LossMode::Summed),
            other => Err(Error::Config(format!("unknown loss mode '{other}'"))),
        }
    }
}

/// How sentence representations aggregate into the text representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregationMode {
    TopM,
    Mean,
}

impl AggregationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMode::TopM => "top-m",
            AggregationMode::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "top-m" => Ok(AggregationMode::TopM),
            "mean" => Ok(AggregationMode::Mean),
            other => Err(Error::Config(format!("unknown attention mode '{other}'"))),
        }
    }
}

/// Every knob of the model and its training run. Stored in full inside each
/// checkpoint so evaluation reproduces the training-time configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Entity/relation embedding dimension.
    pub k: usize,
    /// Word feature dimension.
    pub k_w: usize,
    /// Position feature dimension.
    pub k_p: usize,
    /// Position clip distance d; position ids live in [-d, d].
    pub clip_distance: i32,
    /// Attention keeps the top-m sentences.
    pub top_m: usize,
    /// Hinge margin γ.
    pub margin: f64,
    pub norm: NormKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Positive floor for attention weights.
    pub epsilon: f64,
    pub seed: u64,
    pub energy_mode: EnergyMode,
    pub loss_mode: LossMode,
    pub encoder: EncoderKind,
    pub aggregation: AggregationMode,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            k: 50,
            k_w: 50,
            k_p: 5,
            clip_distance: 10,
            top_m: 5,
            margin: 1.0,
            norm: NormKind::L1,
            learning_rate: 0.01,
            batch_size: 120,
            epochs: 500,
            epsilon: 1e-6,
            seed: 42,
            energy_mode: EnergyMode::Full,
            loss_mode: LossMode::FourHinges,
            encoder: EncoderKind::Rnn,
            aggregation: AggregationMode::TopM,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.k_w < 1 || self.k_p < 1 {
            return Err(Error::Config(
                "embedding dimensions k, k_w, k_p must be ≥ 1".into(),
            ));
        }
        if self.clip_distance < 1 {
            return Err(Error::Config("clip distance must be ≥ 1".into()));
        }
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!(
                "margin must be > 0, got {}",
                self.margin
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be ≥ 1".into()));
        }
        self.attention().validate()
    }

    /// The attention sub-configuration.
    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            top_m: self.top_m,
            epsilon: self.epsilon,
        }
    }

    /// Encoder input dimension `k_w + k_p`.
    pub fn input_dim(&self) -> usize {
        self.k_w + self.k_p
    }
}
