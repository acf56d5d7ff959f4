//! Greedy and beam-search decoding in eval mode.

use std::cmp::Ordering;

use super::{ModelError, TransducerModel};
use crate::tokenizer::{BOS_ID, EOS_ID};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Generated ids without BOS/EOS.
    pub ids: Vec<u32>,
    /// `max_len` was reached before EOS.
    pub truncated: bool,
    /// Summed log-probability of the emitted tokens (EOS included when emitted).
    pub log_prob: f64,
}

impl Decoded {
    /// Log-probability per scored token, the quantity beam search ranks by.
    pub fn normalized_score(&self) -> f64 {
        let n = self.ids.len() + usize::from(!self.truncated);
        if n == 0 {
            0.0
        } else {
            self.log_prob / n as f64
        }
    }
}

/// Index of the first maximum.
pub(crate) fn argmax<T: Scalar>(values: impl Iterator<Item = T>) -> u32 {
    let mut best = (0u32, T::neg_infinity());
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i as u32, v);
        }
    }
    best.0
}

fn check_max_len<T: Scalar>(model: &TransducerModel<T>, max_len: usize) -> Result<(), ModelError> {
    // the decoder input holds BOS plus up to max_len generated tokens
    let max = model.config().max_sequence_length;
    if max_len + 1 > max {
        return Err(ModelError::SequenceTooLong { len: max_len + 1, max });
    }
    Ok(())
}

fn with_bos(ids: &[u32]) -> Vec<u32> {
    let mut prefix = Vec::with_capacity(ids.len() + 1);
    prefix.push(BOS_ID);
    prefix.extend_from_slice(ids);
    prefix
}

/// Appends the argmax token until EOS or until `max_len` tokens have been
/// generated.
pub fn greedy_decode<T: Scalar>(
    model: &TransducerModel<T>,
    src: &[u32],
    max_len: usize,
) -> Result<Decoded, ModelError> {
    check_max_len(model, max_len)?;
    let enc = model.encode_eval(src)?;
    let mut ids = Vec::new();
    let mut log_prob = 0.0f64;
    loop {
        let lp = model.next_log_probs(&enc, &with_bos(&ids));
        let tok = argmax(lp.iter().copied());
        if tok == EOS_ID {
            log_prob += lp[tok as usize].as_f64();
            return Ok(Decoded { ids, truncated: false, log_prob });
        }
        if ids.len() == max_len {
            return Ok(Decoded { ids, truncated: true, log_prob });
        }
        log_prob += lp[tok as usize].as_f64();
        ids.push(tok);
    }
}

struct Candidate {
    score: f64,
    step: f64,
    parent: usize,
    token: u32,
}

/// Higher total first, then higher step log-probability, then lower parent
/// index, then lower token id. With one beam this reproduces greedy exactly.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.step.total_cmp(&a.step))
        .then(a.parent.cmp(&b.parent))
        .then(a.token.cmp(&b.token))
}

/// Beam search ranking finished hypotheses by log-probability per token.
pub fn beam_decode<T: Scalar>(
    model: &TransducerModel<T>,
    src: &[u32],
    beam_width: usize,
    max_len: usize,
) -> Result<Decoded, ModelError> {
    if beam_width == 0 {
        return Err(ModelError::InvalidBeamWidth);
    }
    check_max_len(model, max_len)?;
    let enc = model.encode_eval(src)?;
    let mut beams: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Decoded> = Vec::new();
    let mut truncated: Vec<Decoded> = Vec::new();

    while !beams.is_empty() && finished.len() < beam_width {
        let mut candidates = Vec::new();
        for (parent, (ids, logp)) in beams.iter().enumerate() {
            let lp = model.next_log_probs(&enc, &with_bos(ids));
            candidates.extend(lp.iter().enumerate().map(|(token, &v)| Candidate {
                score: logp + v.as_f64(),
                step: v.as_f64(),
                parent,
                token: token as u32,
            }));
        }
        candidates.sort_by(rank);
        let mut next = Vec::new();
        for c in candidates.into_iter().take(beam_width) {
            let (ids, logp) = &beams[c.parent];
            if c.token == EOS_ID {
                finished.push(Decoded { ids: ids.clone(), truncated: false, log_prob: c.score });
            } else if ids.len() == max_len {
                truncated.push(Decoded { ids: ids.clone(), truncated: true, log_prob: *logp });
            } else {
                let mut ext = ids.clone();
                ext.push(c.token);
                next.push((ext, c.score));
            }
        }
        beams = next;
    }
    let pool = if finished.is_empty() { truncated } else { finished };
    let best = pool
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| b.normalized_score().total_cmp(&a.normalized_score()).then(i.cmp(j)))
        .map(|(_, d)| d)
        .expect("at least one hypothesis");
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig};

    fn model(seed: u64) -> TransducerModel<f64> {
        let cfg = ModelConfig {
            encoder_layers: 1,
            decoder_layers: 1,
            attention_heads: 2,
            feedforward_dim: 16,
            hidden_size: 8,
            pos_embedding_dim: 4,
            dropout: 0.0,
            vocab_size: 9,
            max_sequence_length: 12,
            ..ModelConfig::default()
        };
        build_model(cfg, seed).unwrap()
    }

    #[test]
    fn width_one_beam_is_greedy() {
        for seed in 0..8 {
            let m = model(seed);
            let g = greedy_decode(&m, &[4, 5, 6], 6).unwrap();
            let b = beam_decode(&m, &[4, 5, 6], 1, 6).unwrap();
            assert_eq!(g, b, "seed {seed}");
        }
    }

    #[test]
    fn eos_first_gives_empty_output() {
        let mut m = model(1);
        m.tensor_mut("output.bias").unwrap()[EOS_ID as usize] = 50.0;
        let d = greedy_decode(&m, &[4, 5], 5).unwrap();
        assert!(d.ids.is_empty());
        assert!(!d.truncated);
    }

    #[test]
    fn truncation_is_flagged() {
        let mut m = model(1);
        m.tensor_mut("output.bias").unwrap()[7] = 50.0;
        let d = greedy_decode(&m, &[4, 5], 4).unwrap();
        assert_eq!(d.ids, vec![7; 4]);
        assert!(d.truncated);
        let b = beam_decode(&m, &[4, 5], 3, 4).unwrap();
        assert!(b.truncated);
    }

    #[test]
    fn limits_are_checked() {
        let m = model(1);
        assert!(matches!(beam_decode(&m, &[4], 0, 3), Err(ModelError::InvalidBeamWidth)));
        assert!(matches!(greedy_decode(&m, &[4], 12), Err(ModelError::SequenceTooLong { .. })));
    }
}
