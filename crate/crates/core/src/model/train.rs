//! Mini-batch Adam with teacher forcing and validation-loss early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transducer::teacher_forcing;
use super::{ForwardMode, ModelError, TrainConfig, TransducerModel};
use crate::Scalar;

/// Examples per gradient buffer. Fixed so the summation order, and hence the
/// result, does not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop: StopReason,
}

#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub model: TransducerModel<T>,
    pub history: History,
}

/// Validation-loss early stopping: stop after `patience` consecutive epochs
/// without an improvement larger than `min_delta`.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: usize,
    bad_epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self { patience, min_delta, best: f64::INFINITY, best_epoch: 0, bad_epochs: 0 }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Observation {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            Observation { improved: true, stop: false }
        } else {
            self.bad_epochs += 1;
            Observation { improved: false, stop: self.bad_epochs >= self.patience }
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean token cross-entropy over `pairs` in eval mode.
pub fn batch_loss<T: Scalar>(
    model: &TransducerModel<T>,
    pairs: &[(Vec<u32>, Vec<u32>)],
    label_smoothing: f64,
) -> Result<f64, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let parts: Vec<(T, usize)> = pairs
        .par_iter()
        .map(|(s, t)| model.pair_loss(s, t, ForwardMode::Eval, label_smoothing, None))
        .collect::<Result<_, _>>()?;
    let tokens: usize = parts.iter().map(|p| p.1).sum();
    let total: f64 = parts.iter().map(|p| p.0.as_f64()).sum();
    Ok(total / tokens as f64)
}

/// Fraction of target tokens (EOS included) that are the argmax under
/// teacher forcing in eval mode.
pub fn teacher_forced_accuracy<T: Scalar>(
    model: &TransducerModel<T>,
    pairs: &[(Vec<u32>, Vec<u32>)],
) -> Result<f64, ModelError> {
    let counts: Vec<(usize, usize)> = pairs
        .par_iter()
        .map(|(s, t)| {
            let (input, labels) = teacher_forcing(t);
            let lp = model.log_probs(s, &input, ForwardMode::Eval)?;
            let hits = lp
                .rows()
                .into_iter()
                .zip(&labels)
                .filter(|(row, &label)| super::decode::argmax(row.iter().copied()) == label)
                .count();
            Ok((hits, labels.len()))
        })
        .collect::<Result<_, ModelError>>()?;
    let (hits, total) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(hits as f64 / total.max(1) as f64)
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], step: 0 }
    }

    fn update(&mut self, params: &mut [T], grads: &[T], tc: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (T::lit(tc.beta1), T::lit(tc.beta2));
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        let lr = T::lit(tc.learning_rate);
        let eps = T::lit(tc.adam_eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

/// Summed gradient and loss of a batch in train mode. Work is split into
/// fixed-size chunks that are reduced in order.
fn batch_gradient<T: Scalar>(
    model: &TransducerModel<T>,
    batch: &[&(Vec<u32>, Vec<u32>)],
    tc: &TrainConfig,
    step: u64,
) -> Result<(Vec<T>, T, usize), ModelError> {
    let n = model.parameter_count();
    let chunks: Vec<(Vec<T>, T, usize)> = batch
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut g = vec![T::zero(); n];
            let (mut loss, mut tokens) = (T::zero(), 0);
            for (j, (s, t)) in chunk.iter().enumerate() {
                let seed = mix(tc.seed, step, (ci * GRAD_CHUNK + j) as u64);
                let (l, k) = model.pair_loss(s, t, ForwardMode::Train { seed }, tc.label_smoothing, Some(&mut g))?;
                loss += l;
                tokens += k;
            }
            Ok((g, loss, tokens))
        })
        .collect::<Result<_, ModelError>>()?;
    let mut iter = chunks.into_iter();
    let (mut grads, mut loss, mut tokens) = iter.next().expect("non-empty batch");
    for (g, l, k) in iter {
        grads.iter_mut().zip(&g).for_each(|(a, &b)| *a += b);
        loss += l;
        tokens += k;
    }
    Ok((grads, loss, tokens))
}

/// Trains `model` on `train_pairs` (source ids, target ids) and returns the
/// parameters with the lowest validation loss.
pub fn train<T: Scalar>(
    mut model: TransducerModel<T>,
    train_pairs: &[(Vec<u32>, Vec<u32>)],
    tc: &TrainConfig,
    val_pairs: &[(Vec<u32>, Vec<u32>)],
) -> Result<TrainedModel<T>, ModelError> {
    tc.validate()?;
    if train_pairs.is_empty() || val_pairs.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    for (s, t) in train_pairs.iter().chain(val_pairs) {
        model.check_ids(s, 1)?;
        model.check_ids(t, 1)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut adam = Adam::new(model.parameter_count());
    let mut stopper = EarlyStopping::new(tc.early_stop_patience, tc.min_delta);
    let mut best_params = model.params().to_vec();
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut stop = StopReason::MaxEpochs;
    let mut step = 0u64;

    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_tokens) = (0.0f64, 0usize);
        for (bi, idx) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<_> = idx.iter().map(|&i| &train_pairs[i]).collect();
            let (mut grads, loss, tokens) = batch_gradient(&model, &batch, tc, step)?;
            step += 1;
            let loss = loss.as_f64();
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::DivergedLoss { epoch, batch: bi });
            }
            let scale = T::lit(1.0 / tokens as f64);
            grads.iter_mut().for_each(|g| *g *= scale);
            adam.update(model.params_mut(), &grads, tc);
            epoch_loss += loss;
            epoch_tokens += tokens;
        }
        let train_loss = epoch_loss / epoch_tokens as f64;
        let val_loss = batch_loss(&model, val_pairs, tc.label_smoothing)?;
        if !val_loss.is_finite() {
            return Err(ModelError::DivergedLoss { epoch, batch: 0 });
        }
        log::info!("epoch {epoch}: train loss {train_loss:.5}, validation loss {val_loss:.5}");
        epochs.push(EpochRecord { epoch, train_loss, val_loss });
        let obs = stopper.observe(epoch, val_loss);
        if obs.improved {
            best_params.copy_from_slice(model.params());
        }
        if obs.stop && epoch < tc.max_epochs {
            stop = StopReason::EarlyStopped;
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    let (best_epoch, best_val_loss) = stopper.best();
    Ok(TrainedModel { model, history: History { epochs, best_epoch, best_val_loss, stop } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig};

    #[test]
    fn early_stopping_rule() {
        let mut es = EarlyStopping::new(2, 0.0);
        let curve = [3.0, 2.0, 2.5, 1.5, 1.6, 1.7, 1.0];
        let stops: Vec<bool> = curve.iter().enumerate().map(|(i, &l)| es.observe(i + 1, l).stop).collect();
        assert_eq!(stops, [false, false, false, false, false, true, false]);
        assert_eq!(es.best(), (7, 1.0));
    }

    #[test]
    fn min_delta_counts_small_gains_as_plateau() {
        let mut es = EarlyStopping::new(1, 0.1);
        assert!(es.observe(1, 1.0).improved);
        assert!(es.observe(2, 0.95).stop);
    }

    fn copy_pairs(n: usize) -> Vec<(Vec<u32>, Vec<u32>)> {
        (0..n)
            .map(|i| {
                let s: Vec<u32> = (0..3 + i % 3).map(|j| 4 + ((i * 7 + j * 3) % 6) as u32).collect();
                (s.clone(), s)
            })
            .collect()
    }

    fn small() -> ModelConfig {
        ModelConfig {
            encoder_layers: 1,
            decoder_layers: 1,
            attention_heads: 2,
            feedforward_dim: 32,
            hidden_size: 16,
            pos_embedding_dim: 8,
            dropout: 0.0,
            vocab_size: 10,
            max_sequence_length: 12,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn loss_decreases_and_training_is_deterministic() {
        let pairs = copy_pairs(16);
        let tc = TrainConfig { batch_size: 4, learning_rate: 3e-3, max_epochs: 5, seed: 2, ..TrainConfig::default() };
        let model: TransducerModel<f32> = build_model(small(), 1).unwrap();
        let initial = batch_loss(&model, &pairs, 0.0).unwrap();
        let a = train(model.clone(), &pairs, &tc, &pairs).unwrap();
        let b = train(model, &pairs, &tc, &pairs).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.history, b.history);
        assert!(a.history.best_val_loss < initial);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let model: TransducerModel<f32> = build_model(small(), 1).unwrap();
        let tc = TrainConfig::default();
        assert!(matches!(train(model, &[], &tc, &copy_pairs(2)), Err(ModelError::EmptyDataset)));
    }

    #[test]
    fn exploding_learning_rate_reports_divergence() {
        let pairs = copy_pairs(8);
        let model: TransducerModel<f32> = build_model(small(), 1).unwrap();
        let tc = TrainConfig { batch_size: 8, learning_rate: 1e30, max_epochs: 20, ..TrainConfig::default() };
        match train(model, &pairs, &tc, &pairs) {
            Err(ModelError::DivergedLoss { .. }) => {}
            other => panic!("expected divergence, got {:?}", other.map(|t| t.history)),
        }
    }
}
