use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    bleu_corpus, edit_ops, ezafe_prf, homograph_accuracy, EditOps, EvalCounts, EvalReport, MetricsError, PerOptions,
};
use crate::codec::{to_phonemes, IntermediateAlphabet, PhonemeToken, SEPARATOR};
use crate::corpus::{split_words, CorpusEntry};
use crate::model::TransducerModel;
use crate::pipeline::{transliterate_ids, DecodeOptions, PipelineError};
use crate::tokenizer::BpeTokenizer;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub decode: DecodeOptions,
    pub per: PerOptions,
    pub bleu_order: usize,
    /// Score BLEU over characters instead of words.
    pub char_bleu: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { decode: DecodeOptions::default(), per: PerOptions::default(), bleu_order: 4, char_bleu: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub source: String,
    pub reference: String,
    pub hypothesis: String,
    pub edits: EditOps,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: EvalReport,
    pub sentences: Vec<SentenceRecord>,
}

/// PER symbol: a phoneme or boundary, or a hypothesis character outside the
/// alphabet (never equal to any reference symbol).
#[derive(Debug, Clone, Copy, PartialEq)]
enum Sym {
    Known(PhonemeToken),
    Foreign(char),
}

fn hypothesis_symbols(text: &str, alphabet: &IntermediateAlphabet) -> Vec<Sym> {
    let mut out = Vec::new();
    for (i, word) in split_words(text).into_iter().enumerate() {
        if i > 0 {
            out.push(Sym::Known(PhonemeToken::Boundary));
        }
        out.extend(word.chars().map(|c| match alphabet.id_of_char(c) {
            Some(id) => Sym::Known(PhonemeToken::Phoneme(id)),
            None => Sym::Foreign(c),
        }));
    }
    out
}

fn bleu_tokens(text: &str, chars: bool) -> Vec<String> {
    if chars {
        text.chars().filter(|c| *c != SEPARATOR).map(String::from).collect()
    } else {
        split_words(text).into_iter().map(String::from).collect()
    }
}

/// Decodes every entry's Persian side and scores the hypotheses against the
/// Pinglish references.
pub fn evaluate<T: Scalar>(
    model: &TransducerModel<T>,
    tokenizer: &BpeTokenizer,
    entries: &[CorpusEntry],
    alphabet: &IntermediateAlphabet,
    opts: &EvalOptions,
) -> Result<Evaluation, PipelineError> {
    if entries.is_empty() {
        return Err(PipelineError::EmptyInput("evaluation split"));
    }
    model.check_vocab(tokenizer.vocab_size())?;
    let decoded = entries
        .par_iter()
        .map(|e| transliterate_ids(model, tokenizer, &tokenizer.encode(&e.fa), opts.decode))
        .collect::<Result<Vec<_>, _>>()?;

    let mut sentences = Vec::with_capacity(entries.len());
    for (e, hyp) in entries.iter().zip(&decoded) {
        let reference: Vec<Sym> = to_phonemes(&e.pg, alphabet)?.into_items().into_iter().map(Sym::Known).collect();
        let hypothesis = hypothesis_symbols(&hyp.text, alphabet);
        let keep = |s: &&Sym| opts.per.count_boundaries || **s != Sym::Known(PhonemeToken::Boundary);
        let r: Vec<Sym> = reference.iter().filter(keep).copied().collect();
        let h: Vec<Sym> = hypothesis.iter().filter(keep).copied().collect();
        sentences.push(SentenceRecord {
            id: e.id.clone(),
            source: e.fa.clone(),
            reference: e.pg.clone(),
            hypothesis: hyp.text.clone(),
            edits: edit_ops(&r, &h),
            truncated: hyp.truncated,
        });
    }

    let edits: EditOps = sentences.iter().map(|s| s.edits).sum();
    let per: f64 = edits.rate().ok_or(MetricsError::EmptyReference)?;
    let refs: Vec<Vec<String>> = entries.iter().map(|e| bleu_tokens(&e.pg, opts.char_bleu)).collect();
    let hyps: Vec<Vec<String>> = decoded.iter().map(|d| bleu_tokens(&d.text, opts.char_bleu)).collect();
    let bleu: f64 = bleu_corpus(&refs, &hyps, opts.bleu_order)?;
    let hyp_texts: Vec<&str> = decoded.iter().map(|d| d.text.as_str()).collect();
    let ezafe = ezafe_prf::<f64, _>(entries, &hyp_texts)?;
    let homograph = match homograph_accuracy::<f64, _>(entries, &hyp_texts) {
        Ok(h) => Some(h),
        Err(MetricsError::NoHomographOccurrences) => None,
        Err(e) => return Err(e.into()),
    };

    let report = EvalReport {
        bleu,
        per,
        edits,
        ezafe_precision: ezafe.precision,
        ezafe_recall: ezafe.recall,
        ezafe_f1: ezafe.f1,
        homograph_accuracy: homograph.map(|h| h.accuracy),
        counts: EvalCounts {
            sentences: entries.len(),
            phonemes: edits.total_ref,
            homograph_occurrences: homograph.map_or(0, |h| h.total),
            ezafe_scorable_words: ezafe.counts.scored_words(),
            alignment_mismatch: ezafe.counts.mismatched_words,
            misaligned_sentences: ezafe.counts.misaligned_sentences,
            truncated_decodes: decoded.iter().filter(|d| d.truncated).count(),
        },
    };
    Ok(Evaluation { report, sentences })
}
