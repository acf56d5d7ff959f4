//! Attention-based encoder-decoder transducer from Persian token ids to
//! Pinglish token ids: parameters, training, decoding and checkpoints.

mod checkpoint;
mod config;
mod decode;
mod gradcheck;
mod layers;
mod params;
mod train;
mod transducer;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{ModelConfig, PositionMode, TrainConfig};
pub use decode::{beam_decode, greedy_decode, Decoded};
pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport};
pub use params::{Layout, ParamSpec};
pub use train::{
    batch_loss, teacher_forced_accuracy, train, EarlyStopping, EpochRecord, History, Observation, StopReason,
    TrainedModel,
};

use params::Init;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds the limit of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} is outside the vocabulary of {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("beam width must be at least 1")]
    InvalidBeamWidth,
    #[error("training data is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: usize, batch: usize },
    #[error("checkpoint format version {found}, expected {expected}")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("{what}: expected {expected}, found {found}")]
    ShapeMismatch { what: String, expected: String, found: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whether dropout is active. Masks in train mode are drawn from `seed`, so
/// a train-mode forward pass is itself reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Eval,
    Train { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct TransducerModel<T> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<T>,
}

impl<T: PartialEq> PartialEq for TransducerModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

/// Builds a freshly initialized model; same config and seed give identical parameters.
pub fn build_model<T: crate::Scalar>(config: ModelConfig, seed: u64) -> Result<TransducerModel<T>, ModelError> {
    TransducerModel::build(config, seed)
}

impl<T: crate::Scalar> TransducerModel<T> {
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let mut params = Vec::with_capacity(layout.total());
        for spec in layout.specs() {
            let n = spec.numel();
            match spec.init {
                Init::Embedding => params.extend((0..n).map(|_| T::lit(normal.sample(&mut rng)))),
                Init::Xavier { fan_in, fan_out } => {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    params.extend((0..n).map(|_| T::lit(rng.random_range(-bound..bound))));
                }
                Init::Zeros => params.extend(std::iter::repeat_n(T::zero(), n)),
                Init::Ones => params.extend(std::iter::repeat_n(T::one(), n)),
            }
        }
        Ok(Self { config, layout, params })
    }

    /// Wraps an existing parameter vector, checking length and finiteness.
    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total() {
            return Err(ModelError::ShapeMismatch {
                what: "parameter vector".into(),
                expected: layout.total().to_string(),
                found: params.len().to_string(),
            });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(ModelError::CorruptCheckpoint(format!("non-finite value in {}", layout.owner(i).name)));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.specs().iter().find(|s| s.name == name).map(|s| &self.params[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let range = self.layout.specs().iter().find(|s| s.name == name)?.range();
        Some(&mut self.params[range])
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Same model with parameters converted to another scalar type.
    pub fn cast<U: crate::Scalar>(&self) -> TransducerModel<U> {
        TransducerModel {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| U::lit(p.as_f64())).collect(),
        }
    }

    /// `ShapeMismatch` unless the model's vocabulary matches the tokenizer's.
    pub fn check_vocab(&self, vocab_size: usize) -> Result<(), ModelError> {
        if self.config.vocab_size != vocab_size {
            return Err(ModelError::ShapeMismatch {
                what: "vocabulary size".into(),
                expected: vocab_size.to_string(),
                found: self.config.vocab_size.to_string(),
            });
        }
        Ok(())
    }
}
