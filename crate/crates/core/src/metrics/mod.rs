//! Corpus BLEU, phoneme error rate, Ezafe precision/recall/F1 and
//! homograph accuracy.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{PhonemeSequence, PhonemeToken};
use crate::corpus::{split_words, CorpusEntry};
use crate::Scalar;

mod evaluate;

pub use evaluate::{evaluate, EvalOptions, Evaluation, SentenceRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{refs} references but {hyps} hypotheses")]
    LengthMismatch { refs: usize, hyps: usize },
    #[error("hypothesis corpus has no tokens")]
    EmptyHypothesisCorpus,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("reference sequence is empty")]
    EmptyReference,
    #[error("no homograph occurrences in scorable sentences")]
    NoHomographOccurrences,
}

fn ngram_counts<W: Eq + Hash>(tokens: &[W], n: usize) -> HashMap<&[W], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_default() += 1;
        }
    }
    counts
}

/// Corpus-level BLEU with clipped n-gram precisions pooled over all
/// sentences, uniform weights `1/max_n` and the brevity penalty
/// `exp(1 - r/c)` when the hypotheses are not longer than the references.
///
/// Returns exactly 0 when any pooled precision is 0 (no smoothing).
pub fn bleu_corpus<T: Scalar, W: Eq + Hash>(refs: &[Vec<W>], hyps: &[Vec<W>], max_n: usize) -> Result<T, MetricsError> {
    if refs.len() != hyps.len() {
        return Err(MetricsError::LengthMismatch { refs: refs.len(), hyps: hyps.len() });
    }
    if max_n == 0 {
        return Err(MetricsError::InvalidOrder);
    }
    let hyp_len: usize = hyps.iter().map(Vec::len).sum();
    let ref_len: usize = refs.iter().map(Vec::len).sum();
    if hyp_len == 0 {
        return Err(MetricsError::EmptyHypothesisCorpus);
    }

    let weight = T::one() / T::lit(max_n as f64);
    let mut log_sum = T::zero();
    for n in 1..=max_n {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (r, h) in refs.iter().zip(hyps) {
            let ref_counts = ngram_counts(r, n);
            for (gram, count) in ngram_counts(h, n) {
                matched += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                total += count;
            }
        }
        if matched == 0 {
            return Ok(T::zero());
        }
        log_sum += weight * (T::lit(matched as f64) / T::lit(total as f64)).ln();
    }
    let brevity =
        if hyp_len > ref_len { T::one() } else { (T::one() - T::lit(ref_len as f64) / T::lit(hyp_len as f64)).exp() };
    Ok(brevity * log_sum.exp())
}

/// Edit counts of a minimal unit-cost alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOps {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub total_ref: usize,
}

impl EditOps {
    pub fn errors(&self) -> usize {
        self.insertions + self.deletions + self.substitutions
    }

    /// `(I + Del + S) / TotalN`; `None` for an empty reference.
    pub fn rate<T: Scalar>(&self) -> Option<T> {
        (self.total_ref > 0).then(|| T::lit(self.errors() as f64) / T::lit(self.total_ref as f64))
    }
}

impl std::ops::Add for EditOps {
    type Output = EditOps;

    fn add(self, o: EditOps) -> EditOps {
        EditOps {
            insertions: self.insertions + o.insertions,
            deletions: self.deletions + o.deletions,
            substitutions: self.substitutions + o.substitutions,
            total_ref: self.total_ref + o.total_ref,
        }
    }
}

impl std::iter::Sum for EditOps {
    fn sum<I: Iterator<Item = EditOps>>(iter: I) -> Self {
        iter.fold(EditOps::default(), |a, b| a + b)
    }
}

/// Levenshtein alignment by dynamic programming, split into I/Del/S.
///
/// Among minimal alignments the backtrace prefers match/substitution, then
/// deletion, then insertion.
pub fn edit_ops<S: PartialEq>(reference: &[S], hypothesis: &[S]) -> EditOps {
    let (n, m) = (reference.len(), hypothesis.len());
    let width = m + 1;
    let mut cost = vec![0u32; (n + 1) * width];
    for i in 0..=n {
        cost[i * width] = i as u32;
    }
    for (j, c) in cost[..width].iter_mut().enumerate() {
        *c = j as u32;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[(i - 1) * width + j - 1] + u32::from(reference[i - 1] != hypothesis[j - 1]);
            let del = cost[(i - 1) * width + j] + 1;
            let ins = cost[i * width + j - 1] + 1;
            cost[i * width + j] = diag.min(del).min(ins);
        }
    }
    let mut ops = EditOps { total_ref: n, ..EditOps::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if cost[(i - 1) * width + j - 1] + u32::from(!same) == here {
                if !same {
                    ops.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[(i - 1) * width + j] + 1 == here {
            ops.deletions += 1;
            i -= 1;
        } else {
            ops.insertions += 1;
            j -= 1;
        }
    }
    ops
}

/// Whether word boundaries take part in the PER alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerOptions {
    pub count_boundaries: bool,
}

impl Default for PerOptions {
    fn default() -> Self {
        Self { count_boundaries: true }
    }
}

fn filtered(seq: &PhonemeSequence, opts: PerOptions) -> Vec<PhonemeToken> {
    seq.items().iter().copied().filter(|t| opts.count_boundaries || *t != PhonemeToken::Boundary).collect()
}

/// Phoneme error rate of one hypothesis.
pub fn per<T: Scalar>(reference: &PhonemeSequence, hypothesis: &PhonemeSequence) -> Result<(EditOps, T), MetricsError> {
    per_with(reference, hypothesis, PerOptions::default())
}

pub fn per_with<T: Scalar>(
    reference: &PhonemeSequence,
    hypothesis: &PhonemeSequence,
    opts: PerOptions,
) -> Result<(EditOps, T), MetricsError> {
    let ops = edit_ops(&filtered(reference, opts), &filtered(hypothesis, opts));
    let rate = ops.rate().ok_or(MetricsError::EmptyReference)?;
    Ok((ops, rate))
}

/// Corpus PER: edit counts and reference lengths are pooled before dividing.
pub fn corpus_per<T: Scalar>(
    pairs: &[(PhonemeSequence, PhonemeSequence)],
    opts: PerOptions,
) -> Result<(EditOps, T), MetricsError> {
    let ops: EditOps = pairs.iter().map(|(r, h)| edit_ops(&filtered(r, opts), &filtered(h, opts))).sum();
    let rate = ops.rate().ok_or(MetricsError::EmptyReference)?;
    Ok((ops, rate))
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1<T: Scalar>(precision: T, recall: T) -> T {
    let sum = precision + recall;
    if sum == T::zero() {
        T::zero()
    } else {
        T::lit(2.0) * precision * recall / sum
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EzafeCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    /// Words whose hypothesis is neither the base form nor base + `e`.
    pub mismatched_words: usize,
    /// Sentences whose hypothesis word count differs from the reference.
    pub misaligned_sentences: usize,
}

impl EzafeCounts {
    pub fn scored_words(&self) -> usize {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EzafeScores<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub counts: EzafeCounts,
}

/// Ezafe base form of a reference word: one trailing `e` removed iff labeled.
fn ezafe_base(word: &str, labeled: bool) -> &str {
    if labeled {
        word.strip_suffix('e').unwrap_or(word)
    } else {
        word
    }
}

/// Word-level Ezafe detection scores.
///
/// A hypothesis word equal to `base + "e"` counts as predicting Ezafe, one
/// equal to `base` as predicting none; anything else is a mismatch and is
/// left out. Sentences with a different word count are left out entirely.
/// An empty denominator yields 1 (nothing of that kind could go wrong).
pub fn ezafe_prf<T: Scalar, H: AsRef<str>>(refs: &[CorpusEntry], hyps: &[H]) -> Result<EzafeScores<T>, MetricsError> {
    if refs.len() != hyps.len() {
        return Err(MetricsError::LengthMismatch { refs: refs.len(), hyps: hyps.len() });
    }
    let mut c = EzafeCounts::default();
    for (entry, hyp) in refs.iter().zip(hyps) {
        let ref_words = split_words(&entry.pg);
        let hyp_words = split_words(hyp.as_ref());
        if ref_words.len() != hyp_words.len() {
            c.misaligned_sentences += 1;
            continue;
        }
        for (idx, (r, h)) in ref_words.iter().zip(&hyp_words).enumerate() {
            let labeled = entry.ezafe.contains(&idx);
            let base = ezafe_base(r, labeled);
            let predicted = if *h == base {
                false
            } else if h.strip_suffix('e') == Some(base) {
                true
            } else {
                c.mismatched_words += 1;
                continue;
            };
            match (labeled, predicted) {
                (true, true) => c.true_positive += 1,
                (false, true) => c.false_positive += 1,
                (true, false) => c.false_negative += 1,
                (false, false) => c.true_negative += 1,
            }
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            T::one()
        } else {
            T::lit(num as f64) / T::lit(den as f64)
        }
    };
    let precision = ratio(c.true_positive, c.true_positive + c.false_positive);
    let recall = ratio(c.true_positive, c.true_positive + c.false_negative);
    Ok(EzafeScores { precision, recall, f1: f1(precision, recall), counts: c })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomographScore<T> {
    pub accuracy: T,
    pub correct: usize,
    pub total: usize,
}

/// Share of annotated homograph occurrences whose hypothesis word matches
/// the reference pronunciation, ignoring an Ezafe `e` on either side.
pub fn homograph_accuracy<T: Scalar, H: AsRef<str>>(
    refs: &[CorpusEntry],
    hyps: &[H],
) -> Result<HomographScore<T>, MetricsError> {
    if refs.len() != hyps.len() {
        return Err(MetricsError::LengthMismatch { refs: refs.len(), hyps: hyps.len() });
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for (entry, hyp) in refs.iter().zip(hyps) {
        if entry.homographs.is_empty() {
            continue;
        }
        let ref_words = split_words(&entry.pg);
        let hyp_words = split_words(hyp.as_ref());
        if ref_words.len() != hyp_words.len() {
            continue;
        }
        for occ in &entry.homographs {
            let idx = occ.word_index;
            let base = ezafe_base(ref_words[idx], entry.ezafe.contains(&idx));
            let h = hyp_words[idx];
            total += 1;
            if h == base || h.strip_suffix('e') == Some(base) {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(MetricsError::NoHomographOccurrences);
    }
    Ok(HomographScore { accuracy: T::lit(correct as f64) / T::lit(total as f64), correct, total })
}

/// Count fields of an [`EvalReport`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub sentences: usize,
    pub phonemes: usize,
    pub homograph_occurrences: usize,
    pub ezafe_scorable_words: usize,
    pub alignment_mismatch: usize,
    pub misaligned_sentences: usize,
    pub truncated_decodes: usize,
}

/// Summary of one evaluation run. All rates are fractions in `[0, 1]`
/// except PER, which can exceed 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub per: f64,
    pub edits: EditOps,
    pub ezafe_precision: f64,
    pub ezafe_recall: f64,
    pub ezafe_f1: f64,
    /// `None` when the test split has no scorable homograph occurrence.
    pub homograph_accuracy: Option<f64>,
    pub counts: EvalCounts,
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::corpus::{HomographOccurrence, Register};

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_corpus_scores_one() {
        let refs = vec![toks("a b c d e"), toks("x y z w")];
        assert_eq!(bleu_corpus::<f64, _>(&refs, &refs, 4).unwrap(), 1.0);
    }

    #[test]
    fn short_hypothesis_gets_brevity_penalty() {
        // p1..p4 = 4/4, 3/3, 2/2, 1/1; BP = exp(1 - 5/4)
        let b: f64 = bleu_corpus(&[toks("a b c d e")], &[toks("a b c d")], 4).unwrap();
        assert!((b - (-0.25f64).exp()).abs() < 1e-12);
        assert!((b - 0.7788).abs() < 1e-4);
    }

    #[test]
    fn disjoint_hypothesis_scores_zero() {
        assert_eq!(bleu_corpus::<f64, _>(&[toks("a b c")], &[toks("x y z")], 4).unwrap(), 0.0);
    }

    #[test]
    fn clipping_limits_repeated_words() {
        // unigram: "the" x4 clipped to 2 of 4; with max_n 1 and equal length
        let b: f64 = bleu_corpus(&[toks("the cat the mat")], &[toks("the the the the")], 1).unwrap();
        assert!((b - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bleu_errors() {
        let r = vec![toks("a")];
        assert_eq!(bleu_corpus::<f64, _>(&r, &[], 4), Err(MetricsError::LengthMismatch { refs: 1, hyps: 0 }));
        assert_eq!(bleu_corpus::<f64, _>(&r, &[vec![]], 4), Err(MetricsError::EmptyHypothesisCorpus));
        assert_eq!(bleu_corpus::<f64, _>(&r, &r, 0), Err(MetricsError::InvalidOrder));
    }

    #[test]
    fn edit_ops_known_cases() {
        let ops = edit_ops(&['ķ', 'A', 'b'], &['ķ', 'a', 'b']);
        assert_eq!((ops.insertions, ops.deletions, ops.substitutions), (0, 0, 1));
        assert_eq!(ops.rate::<f64>(), Some(1.0 / 3.0));
        let ops = edit_ops(&[1, 2, 3, 4, 5], &[]);
        assert_eq!((ops.deletions, ops.rate::<f64>()), (5, Some(1.0)));
        let ops = edit_ops::<u8>(&[], &[1, 2]);
        assert_eq!((ops.insertions, ops.rate::<f64>()), (2, None));
        let ops = edit_ops(&[1, 2, 3], &[1, 2, 3]);
        assert_eq!(ops.errors(), 0);
    }

    fn entry(pg: &str, ezafe: &[usize], homographs: &[(usize, &str)]) -> CorpusEntry {
        CorpusEntry {
            id: "e".into(),
            fa: pg.into(),
            pg: pg.into(),
            ezafe: ezafe.iter().copied().collect::<BTreeSet<_>>(),
            homographs: homographs
                .iter()
                .map(|&(i, r)| HomographOccurrence { word_index: i, surface: "s".into(), reading_id: r.into() })
                .collect(),
            register: Register::Formal,
        }
    }

    #[test]
    fn ezafe_perfect_and_dropped() {
        let refs = vec![entry("ketAbe ķUb ast", &[0], &[]), entry("daste doķtare sefid bUd", &[0, 1], &[])];
        let hyps: Vec<&str> = refs.iter().map(|e| e.pg.as_str()).collect();
        let s: EzafeScores<f64> = ezafe_prf(&refs, &hyps).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));

        // drop the Ezafe of one of E = 3 labeled words
        let hyps = ["ketAbe ķUb ast", "daste doķtar sefid bUd"];
        let s: EzafeScores<f64> = ezafe_prf(&refs, &hyps).unwrap();
        assert_eq!(s.recall, 2.0 / 3.0);
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.counts.false_negative, 1);
    }

    #[test]
    fn ezafe_mismatch_is_excluded() {
        let refs = vec![entry("ketAbe ķUb ast", &[0], &[])];
        let s: EzafeScores<f64> = ezafe_prf(&refs, &["ketAbe bozorg ast"]).unwrap();
        assert_eq!(s.counts.mismatched_words, 1);
        assert_eq!(s.counts.scored_words(), 2);
        let s: EzafeScores<f64> = ezafe_prf(&refs, &["ketAbe ast"]).unwrap();
        assert_eq!(s.counts.misaligned_sentences, 1);
        assert_eq!(s.counts.scored_words(), 0);
    }

    #[test]
    fn f1_is_symmetric_and_bounded() {
        assert_eq!(f1(0.0f64, 0.0), 0.0);
        let (p, r) = (0.25f64, 0.75);
        assert_eq!(f1(p, r), f1(r, p));
        assert!(f1(p, r) >= p.min(r) && f1(p, r) <= p.max(r));
    }

    #[test]
    fn homograph_three_of_four() {
        let refs = vec![
            entry("babre bozorg Amad", &[0], &[(0, "tiger")]),
            entry("in rA bebar", &[], &[(2, "carry")]),
            entry("nAn rA bebor", &[], &[(2, "cut")]),
            entry("U dirUz mord", &[], &[(2, "died")]),
        ];
        let mut hyps: Vec<String> = refs.iter().map(|e| e.pg.clone()).collect();
        let s: HomographScore<f64> = homograph_accuracy(&refs, &hyps).unwrap();
        assert_eq!(s.accuracy, 1.0);
        hyps[2] = "nAn rA bebar".into();
        let s: HomographScore<f64> = homograph_accuracy(&refs, &hyps).unwrap();
        assert_eq!((s.correct, s.total, s.accuracy), (3, 4, 0.75));
        // Ezafe suffix on the hypothesis does not count against the reading
        hyps[2] = "nAn rA bebor".into();
        hyps[0] = "babr bozorg Amad".into();
        assert_eq!(homograph_accuracy::<f64, _>(&refs, &hyps).unwrap().accuracy, 1.0);
    }

    #[test]
    fn homograph_needs_occurrences() {
        let refs = vec![entry("ketAb", &[], &[])];
        assert_eq!(homograph_accuracy::<f64, _>(&refs, &["ketAb"]), Err(MetricsError::NoHomographOccurrences));
    }
}
