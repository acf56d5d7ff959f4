//! Finite-difference verification of the hand-written backward pass.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ForwardMode, ModelError, TransducerModel};
use crate::Scalar;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Number of parameter coordinates to compare.
    pub samples: usize,
    /// Central-difference step, applied in 64-bit arithmetic. The estimate
    /// combines steps `epsilon` and `epsilon / 2` by Richardson extrapolation.
    pub epsilon: f64,
    /// Lower bound on the denominator of the relative error, so coordinates
    /// whose true gradient is numerically zero compare by absolute error.
    pub floor: f64,
    pub seed: u64,
    /// Dropout seed for a train-mode check; `None` checks eval mode.
    pub dropout_seed: Option<u64>,
    /// Adds a deliberate error to the analytic gradient of this tensor.
    pub corrupt_tensor: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { samples: 256, epsilon: 1e-4, floor: 1e-4, seed: 0, dropout_seed: None, corrupt_tensor: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor holding the worst coordinate; `None` when nothing was sampled.
    pub worst_tensor: Option<String>,
    pub per_tensor: BTreeMap<String, f64>,
    pub coordinates: usize,
}

fn mode_for(opts: &GradCheckOptions, index: usize) -> ForwardMode {
    match opts.dropout_seed {
        Some(seed) => ForwardMode::Train { seed: seed.wrapping_add(index as u64) },
        None => ForwardMode::Eval,
    }
}

fn mean_loss<T: Scalar>(
    model: &TransducerModel<T>,
    batch: &[(Vec<u32>, Vec<u32>)],
    opts: &GradCheckOptions,
    grads: Option<&mut [T]>,
) -> Result<f64, ModelError> {
    let (mut loss, mut tokens) = (0.0, 0);
    match grads {
        Some(g) => {
            for (i, (s, t)) in batch.iter().enumerate() {
                let (l, k) = model.pair_loss(s, t, mode_for(opts, i), 0.0, Some(&mut *g))?;
                loss += l.as_f64();
                tokens += k;
            }
            let scale = T::lit(1.0 / tokens as f64);
            g.iter_mut().for_each(|v| *v *= scale);
        }
        None => {
            for (i, (s, t)) in batch.iter().enumerate() {
                let (l, k) = model.pair_loss(s, t, mode_for(opts, i), 0.0, None)?;
                loss += l.as_f64();
                tokens += k;
            }
        }
    }
    Ok(loss / tokens as f64)
}

/// Coordinates to check: one per tensor while the budget allows, the rest
/// uniformly at random, without repeats.
fn sample_coordinates<T: Scalar>(model: &TransducerModel<T>, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = model.parameter_count();
    let n = n.min(total);
    let mut picked = BTreeSet::new();
    for spec in model.layout().specs() {
        if picked.len() == n {
            break;
        }
        picked.insert(spec.offset + rng.random_range(0..spec.numel()));
    }
    while picked.len() < n {
        picked.insert(rng.random_range(0..total));
    }
    picked.into_iter().collect()
}

/// Compares analytic gradients of the mean token cross-entropy over `batch`
/// with central differences computed on a 64-bit copy of the parameters.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check<T: Scalar>(
    model: &TransducerModel<T>,
    batch: &[(Vec<u32>, Vec<u32>)],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, ModelError> {
    let coords = sample_coordinates(model, opts.samples, opts.seed);
    if coords.is_empty() || batch.is_empty() {
        return Ok(GradCheckReport {
            max_rel_error: 0.0,
            worst_tensor: None,
            per_tensor: BTreeMap::new(),
            coordinates: 0,
        });
    }
    let mut analytic = vec![T::zero(); model.parameter_count()];
    mean_loss(model, batch, opts, Some(&mut analytic))?;
    if let Some(name) = &opts.corrupt_tensor {
        let spec = model
            .layout()
            .specs()
            .iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| ModelError::InvalidConfig(format!("no tensor named {name}")))?;
        for g in &mut analytic[spec.range()] {
            *g = *g * T::lit(1.5) + T::lit(0.01);
        }
    }

    let mut wide: TransducerModel<f64> = model.cast();
    let mut per_tensor: BTreeMap<String, f64> = BTreeMap::new();
    let mut worst: (f64, Option<String>) = (0.0, None);
    for &i in &coords {
        let mut central = |h: f64| -> Result<f64, ModelError> {
            let original = wide.params()[i];
            wide.params_mut()[i] = original + h;
            let plus = mean_loss(&wide, batch, opts, None)?;
            wide.params_mut()[i] = original - h;
            let minus = mean_loss(&wide, batch, opts, None)?;
            wide.params_mut()[i] = original;
            Ok((plus - minus) / (2.0 * h))
        };
        let coarse = central(opts.epsilon)?;
        let fine = central(opts.epsilon / 2.0)?;
        let numeric = (4.0 * fine - coarse) / 3.0;
        let a = analytic[i].as_f64();
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        let name = &model.layout().owner(i).name;
        let slot = per_tensor.entry(name.clone()).or_insert(0.0);
        *slot = slot.max(err);
        if err > worst.0 || worst.1.is_none() {
            worst = (err, Some(name.clone()));
        }
    }
    Ok(GradCheckReport { max_rel_error: worst.0, worst_tensor: worst.1, per_tensor, coordinates: coords.len() })
}
