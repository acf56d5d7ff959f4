use std::collections::BTreeSet;

use g2p_bridge_core::codec::{PhonemeId, PhonemeSequence, PhonemeToken};
use g2p_bridge_core::corpus::{CorpusEntry, Register};
use g2p_bridge_core::metrics::{bleu_corpus, corpus_per, ezafe_prf, f1, EzafeCounts, PerOptions};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]).prop_map(String::from), 1..9)
}

fn corpus() -> impl Strategy<Value = Vec<(Vec<String>, Vec<String>)>> {
    prop::collection::vec((sentence(), sentence()), 1..8)
}

fn phonemes() -> impl Strategy<Value = PhonemeSequence> {
    prop::collection::vec(prop::option::weighted(0.8, 0u16..5), 1..10).prop_map(|raw| {
        let mut items: Vec<PhonemeToken> = Vec::new();
        for r in raw {
            match r {
                Some(i) => items.push(PhonemeToken::Phoneme(PhonemeId(i))),
                None if matches!(items.last(), Some(PhonemeToken::Phoneme(_))) => items.push(PhonemeToken::Boundary),
                None => {}
            }
        }
        if items.last() == Some(&PhonemeToken::Boundary) {
            items.pop();
        }
        if items.is_empty() {
            items.push(PhonemeToken::Phoneme(PhonemeId(0)));
        }
        PhonemeSequence::new(items).unwrap()
    })
}

fn ezafe_entry(words: usize, ezafe: BTreeSet<usize>) -> CorpusEntry {
    let pg: Vec<String> =
        (0..words).map(|i| if ezafe.contains(&i) { format!("w{i}e") } else { format!("w{i}") }).collect();
    CorpusEntry {
        id: "s".into(),
        fa: pg.join(" "),
        pg: pg.join(" "),
        ezafe,
        homographs: Vec::new(),
        register: Register::Formal,
    }
}

fn cells(c: &EzafeCounts) -> [usize; 4] {
    [c.true_positive, c.false_positive, c.false_negative, c.true_negative]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bleu_ignores_sentence_order(pairs in corpus(), perm_seed in any::<u64>()) {
        let (refs, hyps): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let refs2: Vec<_> = order.iter().map(|&i| refs[i].clone()).collect();
        let hyps2: Vec<_> = order.iter().map(|&i| hyps[i].clone()).collect();
        let a: f64 = bleu_corpus(&refs, &hyps, 4).unwrap();
        let b: f64 = bleu_corpus(&refs2, &hyps2, 4).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bleu_is_one_exactly_on_identical_corpora(pairs in corpus()) {
        let refs: Vec<_> = pairs.into_iter().map(|p| p.0).collect();
        let score: f64 = bleu_corpus(&refs, &refs, 4).unwrap();
        if refs.iter().any(|r| r.len() >= 4) {
            prop_assert_eq!(score, 1.0);
        }
    }

    #[test]
    fn bleu_below_one_when_hypotheses_differ(pairs in corpus()) {
        let refs: Vec<_> = pairs.iter().map(|p| p.0.clone()).collect();
        prop_assume!(refs.iter().any(|r| r.len() >= 4));
        let mut hyps = refs.clone();
        let last = hyps[0].len() - 1;
        hyps[0][last] = "zz".into();
        let score: f64 = bleu_corpus(&refs, &hyps, 4).unwrap();
        prop_assert!(score < 1.0);
    }

    #[test]
    fn perfect_sentence_never_raises_corpus_per(
        pairs in prop::collection::vec((phonemes(), phonemes()), 1..6),
        extra in phonemes(),
        boundaries in any::<bool>(),
    ) {
        let opts = PerOptions { count_boundaries: boundaries };
        let Ok((_, before)) = corpus_per::<f64>(&pairs, opts) else { return Ok(()) };
        let mut more = pairs.clone();
        more.push((extra.clone(), extra));
        let (_, after) = corpus_per::<f64>(&more, opts).unwrap();
        prop_assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn f1_is_symmetric_and_between_inputs(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
        prop_assert_eq!(f1(p, r), f1(r, p));
        let v = f1(p, r);
        prop_assert!(v >= p.min(r) - 1e-15 && v <= p.max(r) + 1e-15);
    }

    #[test]
    fn ezafe_scores_and_single_flips(words in 2usize..10, ez in prop::collection::btree_set(0usize..9, 0..5), flip in 0usize..9) {
        let ezafe: BTreeSet<usize> = ez.into_iter().filter(|&i| i + 1 < words).collect();
        let entry = ezafe_entry(words, ezafe.clone());
        let refs = vec![entry.clone()];
        let clean = ezafe_prf::<f64, _>(&refs, std::slice::from_ref(&entry.pg)).unwrap();
        prop_assert_eq!((clean.precision, clean.recall, clean.f1), (1.0, 1.0, 1.0));

        let flip = flip % words;
        let hyp: Vec<String> = (0..words)
            .map(|i| if ezafe.contains(&i) != (i == flip) { format!("w{i}e") } else { format!("w{i}") })
            .collect();
        let flipped = ezafe_prf::<f64, _>(&refs, &[hyp.join(" ")]).unwrap();
        let (a, b) = (cells(&clean.counts), cells(&flipped.counts));
        let changed: Vec<usize> = (0..4).filter(|&k| a[k] != b[k]).collect();
        // one correct cell loses the word, one error cell gains it
        prop_assert_eq!(changed.len(), 2);
        prop_assert_eq!(a.iter().sum::<usize>(), b.iter().sum::<usize>());
        let moved_from = if ezafe.contains(&flip) { 0 } else { 3 };
        let moved_to = if ezafe.contains(&flip) { 2 } else { 1 };
        prop_assert_eq!(b[moved_from] + 1, a[moved_from]);
        prop_assert_eq!(b[moved_to], a[moved_to] + 1);
    }
}
