use serde::{Deserialize, Serialize};

use super::ModelError;

/// How positions enter the residual stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PositionMode {
    /// Table of `max_sequence_length x pos_embedding_dim`, linearly projected
    /// to `hidden_size`.
    #[default]
    Projected,
    /// Table of `pos_embedding_dim x hidden_size` added directly, so
    /// `pos_embedding_dim` acts as the position limit.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub attention_heads: usize,
    pub feedforward_dim: usize,
    pub hidden_size: usize,
    pub pos_embedding_dim: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub max_sequence_length: usize,
    pub position_mode: PositionMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_layers: 5,
            decoder_layers: 5,
            attention_heads: 8,
            feedforward_dim: 1024,
            hidden_size: 512,
            pos_embedding_dim: 256,
            dropout: 0.3,
            vocab_size: 2372,
            max_sequence_length: 256,
            position_mode: PositionMode::Projected,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for the bundled toy model and the overfit run.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            encoder_layers: 2,
            decoder_layers: 2,
            attention_heads: 4,
            feedforward_dim: 128,
            hidden_size: 64,
            pos_embedding_dim: 32,
            dropout: 0.0,
            vocab_size,
            max_sequence_length: 128,
            position_mode: PositionMode::Projected,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let counts = [
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("attention_heads", self.attention_heads),
            ("feedforward_dim", self.feedforward_dim),
            ("hidden_size", self.hidden_size),
            ("pos_embedding_dim", self.pos_embedding_dim),
            ("vocab_size", self.vocab_size),
            ("max_sequence_length", self.max_sequence_length),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if !self.hidden_size.is_multiple_of(self.attention_heads) {
            return Err(ModelError::InvalidConfig(format!(
                "hidden_size {} is not divisible by attention_heads {}",
                self.hidden_size, self.attention_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!("dropout {} is outside [0, 1)", self.dropout)));
        }
        if self.position_mode == PositionMode::Table && self.max_sequence_length > self.pos_embedding_dim {
            return Err(ModelError::InvalidConfig(format!(
                "max_sequence_length {} exceeds the {} positions of the table",
                self.max_sequence_length, self.pos_embedding_dim
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.attention_heads
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let (d, f, v) = (self.hidden_size, self.feedforward_dim, self.vocab_size);
        let linear = |i: usize, o: usize| i * o + o;
        let norm = 2 * d;
        let attention = 4 * linear(d, d);
        let feedforward = linear(d, f) + linear(f, d);
        let positions = match self.position_mode {
            PositionMode::Projected => {
                self.max_sequence_length * self.pos_embedding_dim + linear(self.pos_embedding_dim, d)
            }
            PositionMode::Table => self.pos_embedding_dim * d,
        };
        let encoder = self.encoder_layers * (attention + feedforward + 2 * norm) + norm;
        let decoder = self.decoder_layers * (2 * attention + feedforward + 3 * norm) + norm;
        v * d + positions + encoder + decoder + linear(d, v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Smallest validation-loss decrease that counts as an improvement.
    pub min_delta: f64,
    pub label_smoothing: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 2e-4,
            max_epochs: 50,
            early_stop_patience: 5,
            min_delta: 0.0,
            label_smoothing: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(ModelError::InvalidConfig(format!(
                "label_smoothing {} is outside [0, 1)",
                self.label_smoothing
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(ModelError::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_defaults_validate() {
        ModelConfig::default().validate().unwrap();
        TrainConfig::default().validate().unwrap();
        ModelConfig::toy(40).validate().unwrap();
    }

    #[test]
    fn heads_must_divide_hidden() {
        let cfg = ModelConfig { attention_heads: 7, ..ModelConfig::default() };
        assert!(matches!(cfg.validate(), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn rejects_bad_values() {
        for cfg in [
            ModelConfig { dropout: 1.0, ..ModelConfig::default() },
            ModelConfig { decoder_layers: 0, ..ModelConfig::default() },
            ModelConfig { position_mode: PositionMode::Table, max_sequence_length: 300, ..ModelConfig::default() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
    }
}
