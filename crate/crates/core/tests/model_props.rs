use std::sync::LazyLock;

use g2p_bridge_core::model::{
    beam_decode, build_model, greedy_decode, read_checkpoint, teacher_forced_accuracy, train, write_checkpoint,
    ForwardMode, ModelConfig, TrainConfig, TransducerModel,
};
use proptest::prelude::*;

const VOCAB: usize = 12;

fn cfg(seed: u64) -> ModelConfig {
    ModelConfig {
        encoder_layers: 1 + (seed % 2) as usize,
        decoder_layers: 1 + (seed / 2 % 2) as usize,
        attention_heads: 2,
        feedforward_dim: 24,
        hidden_size: 16,
        pos_embedding_dim: 8,
        dropout: 0.1,
        vocab_size: VOCAB,
        max_sequence_length: 16,
        ..ModelConfig::default()
    }
}

fn ids(max: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(4u32..VOCAB as u32, 1..max)
}

/// 48 fixed sequences of length 2..=5 over ids 4..12.
fn copy_pairs() -> Vec<(Vec<u32>, Vec<u32>)> {
    (0..48)
        .map(|i: usize| {
            let len = 2 + i % 4;
            let s: Vec<u32> = (0..len).map(|j| 4 + ((i * 5 + j * j * 3 + j) % 8) as u32).collect();
            (s.clone(), s)
        })
        .collect()
}

static COPY_MODEL: LazyLock<TransducerModel<f32>> = LazyLock::new(|| {
    let config = ModelConfig {
        encoder_layers: 1,
        decoder_layers: 1,
        attention_heads: 2,
        feedforward_dim: 64,
        hidden_size: 32,
        pos_embedding_dim: 16,
        dropout: 0.0,
        vocab_size: VOCAB,
        max_sequence_length: 12,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        batch_size: 8,
        learning_rate: 3e-3,
        max_epochs: 120,
        early_stop_patience: 120,
        seed: 4,
        ..TrainConfig::default()
    };
    let pairs = copy_pairs();
    train(build_model(config, 4).unwrap(), &pairs, &tc, &pairs).unwrap().model
});

#[test]
fn copy_task_is_learned() {
    let pairs = copy_pairs();
    let acc = teacher_forced_accuracy(&COPY_MODEL, &pairs).unwrap();
    assert!(acc >= 0.99, "teacher-forced accuracy {acc}");
    for (src, _) in &pairs {
        assert_eq!(&greedy_decode(&*COPY_MODEL, src, 10).unwrap().ids, src);
    }
}

#[test]
fn wider_beam_scores_at_least_greedy_on_trained_model() {
    for (src, _) in copy_pairs() {
        let g = greedy_decode(&*COPY_MODEL, &src, 10).unwrap();
        let b = beam_decode(&*COPY_MODEL, &src, 4, 10).unwrap();
        assert!(b.normalized_score() >= g.normalized_score() - 1e-9, "{src:?}: {b:?} vs {g:?}");
    }
}

#[test]
fn training_is_reproducible() {
    let pairs = copy_pairs();
    let tc = TrainConfig { batch_size: 8, learning_rate: 1e-3, max_epochs: 3, seed: 9, ..TrainConfig::default() };
    let run = || train(build_model::<f32>(cfg(3), 2).unwrap(), &pairs, &tc, &pairs[..8]).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.model, b.model);
    assert_eq!(a.history, b.history);
    let src = &pairs[0].0;
    assert_eq!(greedy_decode(&a.model, src, 8).unwrap(), greedy_decode(&b.model, src, 8).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn output_rows_normalize(seed in 0u64..8, src in ids(8), tgt in ids(8), train in any::<bool>()) {
        let m: TransducerModel<f32> = build_model(cfg(seed), seed).unwrap();
        let mut prefix = vec![1];
        prefix.extend(tgt);
        let mode = if train { ForwardMode::Train { seed } } else { ForwardMode::Eval };
        let probs = m.forward(&src, &prefix, mode).unwrap();
        for row in probs.rows() {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() <= 1e-5, "{}", row.sum());
        }
    }

    /// Changing target tokens after position t leaves rows 0..=t untouched.
    #[test]
    fn decoder_is_causal(seed in 0u64..8, src in ids(8), tgt in ids(10), other in ids(10), t in 0usize..10) {
        let m: TransducerModel<f64> = build_model(cfg(seed), seed).unwrap();
        let t = t % tgt.len();
        let a: Vec<u32> = std::iter::once(1).chain(tgt.iter().copied()).collect();
        let mut b = a.clone();
        for (k, slot) in b.iter_mut().enumerate().skip(t + 1) {
            *slot = other[k % other.len()];
        }
        for mode in [ForwardMode::Eval, ForwardMode::Train { seed }] {
            let pa = m.forward(&src, &a, mode).unwrap();
            let pb = m.forward(&src, &b, mode).unwrap();
            for r in 0..=t {
                prop_assert_eq!(pa.row(r), pb.row(r), "row {}", r);
            }
        }
    }

    #[test]
    fn checkpoint_reload_forward_is_bit_exact(seed in 0u64..8, src in ids(8), tgt in ids(8)) {
        let m: TransducerModel<f32> = build_model(cfg(seed), seed).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&m, None, &mut buf).unwrap();
        let (back, _) = read_checkpoint::<f32>(&mut buf.as_slice()).unwrap();
        let prefix: Vec<u32> = std::iter::once(1).chain(tgt).collect();
        let pa = m.forward(&src, &prefix, ForwardMode::Eval).unwrap();
        let pb = back.forward(&src, &prefix, ForwardMode::Eval).unwrap();
        let bits = |p: &ndarray::Array2<f32>| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&pa), bits(&pb));
    }
}
