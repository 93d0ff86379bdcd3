//! Declarative configuration: every knob has a documented default, a config
//! file can override it, and command-line flags override the file.
//!
//! The file format is line-oriented `key = value`, UTF-8. Everything from a
//! `#` to the end of its line is a comment. Unknown keys are rejected so a
//! typo cannot silently fall back to a default.

use std::path::PathBuf;

use stkrl::encoders::EncoderKind;
use stkrl::kg::SynthSpec;
use stkrl::model::{AggregationMode, EnergyMode, HyperParams, LossMode};
use stkrl::numerics::NormKind;
use stkrl::trainer::{InitSource, RefreshPolicy, TrainConfig};
use stkrl::{Error, Result};

/// The resolved configuration every command runs against.
///
/// File keys and their defaults:
///
/// | key | default | meaning |
/// |---|---|---|
/// | `dim` | 50 | entity/relation embedding dimension k |
/// | `word_dim` | 50 | word feature dimension |
/// | `position_dim` | 5 | position feature dimension |
/// | `clip_d` | 10 | position-id clip distance |
/// | `top_m` | 5 | sentences kept by attention |
/// | `margin` | 1.0 | hinge margin γ |
/// | `norm` | l1 | energy norm, `l1` or `l2` |
/// | `learning_rate` | 0.01 | SGD step size |
/// | `batch_size` | 120 | positives per batch |
/// | `epochs` | 500 | epoch cap |
/// | `epsilon` | 1e-6 | attention weight floor |
/// | `seed` | 42 | the single global seed |
/// | `energy_mode` | full | `full` or `transE-only` |
/// | `loss_mode` | four-hinges | `four-hinges` or `summed` |
/// | `encoder` | rnn | `rnn`, `rnn-pool` or `lstm` |
/// | `attention` | top-m | `top-m` or `mean` |
/// | `init` | random | `random` or a checkpoint path to warm-start from |
/// | `deterministic` | true | sequential batches, reproducible runs |
/// | `validation_interval` | 10 | epochs between validations |
/// | `patience` | 5 | non-improving validations before stopping |
/// | `refresh` | per-step | sentence selection refresh, `per-step`/`per-epoch` |
/// | `threads` | 1 | worker threads for evaluation parallelism |
/// | `cap` | 40 | max reference sentences per entity |
/// | `synth_entities` | 30 | synthetic graph size |
/// | `synth_relations` | 4 | |
/// | `synth_triples` | 120 | |
/// | `synth_signal` | 1 | neighborhood-derived sentences per entity |
/// | `synth_noise` | 2 | random sentences per entity |
/// | `synth_sentence_length` | 8 | |
/// | `synth_vocab` | 60 | |
/// | `gradcheck_coords` | 200 | sampled coordinates across all tables |
/// | `gradcheck_step` | 1e-5 | central-difference step |
/// | `gradcheck_tolerance` | 1e-4 | max accepted relative error |
///
/// Path keys (no defaults): `train_triples`, `valid_triples`, `test_triples`,
/// `text`, `corpus`, `word_vectors`, `checkpoint_in`, `checkpoint_out`,
/// `report`.
#[derive(Clone, Debug)]
pub struct CliConfig {
    pub hyper: HyperParams,
    pub init: InitSource,
    pub deterministic: bool,
    pub validation_interval: usize,
    pub patience: usize,
    pub refresh: RefreshPolicy,
    pub threads: usize,
    pub cap: usize,
    pub synth: SynthSpec,
    pub gradcheck_coords: usize,
    pub gradcheck_step: f64,
    pub gradcheck_tolerance: f64,
    pub train_triples: Option<PathBuf>,
    pub valid_triples: Option<PathBuf>,
    pub test_triples: Option<PathBuf>,
    pub text: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub checkpoint_in: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            hyper: HyperParams::default(),
            init: InitSource::Random,
            deterministic: true,
            validation_interval: 10,
            patience: 5,
            refresh: RefreshPolicy::PerStep,
            threads: 1,
            cap: 40,
            synth: SynthSpec::default(),
            gradcheck_coords: 200,
            gradcheck_step: 1e-5,
            gradcheck_tolerance: 1e-4,
            train_triples: None,
            valid_triples: None,
            test_triples: None,
            text: None,
            corpus: None,
            word_vectors: None,
            checkpoint_in: None,
            checkpoint_out: None,
            report: None,
        }
    }
}

impl CliConfig {
    /// Applies a config file's contents on top of the current values.
    pub fn apply_file(&mut self, contents: &str) -> Result<()> {
        for (lineno, raw) in contents.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "config line {} is not 'key = value': {raw:?}",
                    lineno + 1
                ))
            })?;
            self.apply_key(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one configuration key from its string form. Unknown keys and
    /// unparsable values are configuration errors naming the key.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dim" => self.hyper.k = parse_num(key, value)?,
            "word_dim" => self.hyper.k_w = parse_num(key, value)?,
            "position_dim" => self.hyper.k_p = parse_num(key, value)?,
            "clip_d" => self.hyper.clip_distance = parse_num(key, value)?,
            "top_m" => self.hyper.top_m = parse_num(key, value)?,
            "margin" => self.hyper.margin = parse_num(key, value)?,
            "norm" => self.hyper.norm = NormKind::parse(value)?,
            "learning_rate" => self.hyper.learning_rate = parse_num(key, value)?,
            "batch_size" => self.hyper.batch_size = parse_num(key, value)?,
            "epochs" => self.hyper.epochs = parse_num(key, value)?,
            "epsilon" => self.hyper.epsilon = parse_num(key, value)?,
            "seed" => self.hyper.seed = parse_num(key, value)?,
            "energy_mode" => self.hyper.energy_mode = EnergyMode::parse(value)?,
            "loss_mode" => self.hyper.loss_mode = LossMode::parse(value)?,
            "encoder" => self.hyper.encoder = EncoderKind::parse(value)?,
            "attention" => self.hyper.aggregation = AggregationMode::parse(value)?,
            "init" => self.init = InitSource::parse(value),
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            "validation_interval" => self.validation_interval = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "refresh" => self.refresh = RefreshPolicy::parse(value)?,
            "threads" => self.threads = parse_num(key, value)?,
            "cap" => self.cap = parse_num(key, value)?,
            "synth_entities" => self.synth.n_entities = parse_num(key, value)?,
            "synth_relations" => self.synth.n_relations = parse_num(key, value)?,
            "synth_triples" => self.synth.n_triples = parse_num(key, value)?,
            "synth_signal" => self.synth.signal_sentences = parse_num(key, value)?,
            "synth_noise" => self.synth.noise_sentences = parse_num(key, value)?,
            "synth_sentence_length" => self.synth.sentence_length = parse_num(key, value)?,
            "synth_vocab" => self.synth.vocab_size = parse_num(key, value)?,
            "gradcheck_coords" => self.gradcheck_coords = parse_num(key, value)?,
            "gradcheck_step" => self.gradcheck_step = parse_num(key, value)?,
            "gradcheck_tolerance" => self.gradcheck_tolerance = parse_num(key, value)?,
            "train_triples" => self.train_triples = Some(PathBuf::from(value)),
            "valid_triples" => self.valid_triples = Some(PathBuf::from(value)),
            "test_triples" => self.test_triples = Some(PathBuf::from(value)),
            "text" => self.text = Some(PathBuf::from(value)),
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "word_vectors" => self.word_vectors = Some(PathBuf::from(value)),
            "checkpoint_in" => self.checkpoint_in = Some(PathBuf::from(value)),
            "checkpoint_out" => self.checkpoint_out = Some(PathBuf::from(value)),
            "report" => self.report = Some(PathBuf::from(value)),
            other => {
                return Err(Error::Config(format!(
                    "unknown configuration key '{other}'"
                )))
            }
        }
        Ok(())
    }

    /// The trainer-facing slice of this configuration.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hyper: self.hyper.clone(),
            init: self.init.clone(),
            deterministic: self.deterministic,
            validation_interval: self.validation_interval,
            patience: self.patience,
            refresh: self.refresh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.threads < 1 {
            return Err(Error::Config("threads must be ≥ 1".into()));
        }
        if self.cap < 1 {
            return Err(Error::Config("cap must be ≥ 1".into()));
        }
        if self.gradcheck_coords < 1 {
            return Err(Error::Config("gradcheck_coords must be ≥ 1".into()));
        }
        if !(self.gradcheck_step > 0.0) {
            return Err(Error::Config("gradcheck_step must be > 0".into()));
        }
        if !(self.gradcheck_tolerance > 0.0) {
            return Err(Error::Config("gradcheck_tolerance must be > 0".into()));
        }
        Ok(())
    }

    /// A required path, by config key name.
    pub fn require(&self, key: &str) -> Result<&PathBuf> {
        let slot = match key {
            "train_triples" => &self.train_triples,
            "valid_triples" => &self.valid_triples,
            "test_triples" => &self.test_triples,
            "text" => &self.text,
            "corpus" => &self.corpus,
            "word_vectors" => &self.word_vectors,
            "checkpoint_in" => &self.checkpoint_in,
            "checkpoint_out" => &self.checkpoint_out,
            "report" => &self.report,
            other => panic!("'{other}' is not a path key"),
        };
        slot.as_ref().ok_or_else(|| {
            Error::Config(format!("required path '{key}' is not configured"))
        })
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("invalid value for '{key}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config(format!(
            "invalid value for '{key}': expected true or false, got '{other}'"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_then_file_then_explicit_key() {
        let mut config = CliConfig::default();
        assert_eq!(config.hyper.margin, 1.0);
        config
            .apply_file("margin = 2.0\n# comment\nseed = 7  # trailing note\n")
            .unwrap();
        assert_eq!(config.hyper.margin, 2.0);
        assert_eq!(config.hyper.seed, 7);
        config.apply_key("margin", "0.5").unwrap();
        assert_eq!(config.hyper.margin, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let mut config = CliConfig::default();
        let err = config.apply_file("marginn = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("marginn"), "{err}");
    }

    #[test]
    fn bad_values_name_the_key() {
        let mut config = CliConfig::default();
        let err = config.apply_key("epochs", "soon").unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");
        let err = config.apply_key("deterministic", "yes").unwrap_err();
        assert!(err.to_string().contains("deterministic"), "{err}");
    }

    #[test]
    fn missing_paths_error_only_on_demand() {
        let config = CliConfig::default();
        assert!(config.validate().is_ok());
        let err = config.require("corpus").unwrap_err();
        assert!(err.to_string().contains("corpus"), "{err}");
        let mut config = config;
        config.apply_key("corpus", "/tmp/c.tsv").unwrap();
        assert_eq!(config.require("corpus").unwrap(), &PathBuf::from("/tmp/c.tsv"));
    }

    #[test]
    fn mode_keys_parse_their_full_vocabulary() {
        let mut config = CliConfig::default();
        config.apply_key("encoder", "lstm").unwrap();
        config.apply_key("attention", "mean").unwrap();
        config.apply_key("loss_mode", "summed").unwrap();
        config.apply_key("energy_mode", "transE-only").unwrap();
        config.apply_key("norm", "l2").unwrap();
        config.apply_key("refresh", "per-epoch").unwrap();
        config.apply_key("init", "warm.ckpt").unwrap();
        assert_eq!(config.hyper.encoder, EncoderKind::Lstm);
        assert_eq!(config.hyper.aggregation, AggregationMode::Mean);
        assert_eq!(config.hyper.loss_mode, LossMode::Summed);
        assert_eq!(config.hyper.energy_mode, EnergyMode::TransEOnly);
        assert_eq!(config.init, InitSource::Warm(PathBuf::from("warm.ckpt")));
        assert_eq!(config.refresh, RefreshPolicy::PerEpoch);
    }
}
