//! Glue between the tokenizer and the transducer: encoding corpus pairs and
//! transliterating raw Persian text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{normalize_persian, CodecError};
use crate::corpus::CorpusEntry;
use crate::metrics::MetricsError;
use crate::model::{beam_decode, greedy_decode, ModelError, TransducerModel};
use crate::tokenizer::{BpeTokenizer, TokenizerError};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("{0} is empty")]
    EmptyInput(&'static str),
}

/// Source (Persian) and target (Pinglish) token ids of every entry.
pub fn encode_pairs<'a>(
    tokenizer: &BpeTokenizer,
    entries: impl IntoIterator<Item = &'a CorpusEntry>,
) -> Vec<(Vec<u32>, Vec<u32>)> {
    entries.into_iter().map(|e| (tokenizer.encode(&e.fa), tokenizer.encode(&e.pg))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeOptions {
    /// 1 selects greedy decoding.
    pub beam_width: usize,
    /// Generated-token limit; defaults to what the model's position table allows.
    pub max_len: Option<usize>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self { beam_width: 1, max_len: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transliteration {
    pub text: String,
    pub truncated: bool,
}

/// Decodes already-encoded source ids and detokenizes the result.
pub fn transliterate_ids<T: Scalar>(
    model: &TransducerModel<T>,
    tokenizer: &BpeTokenizer,
    src: &[u32],
    opts: DecodeOptions,
) -> Result<Transliteration, PipelineError> {
    let max_len = opts.max_len.unwrap_or(model.config().max_sequence_length - 1);
    let out = if opts.beam_width == 1 {
        greedy_decode(model, src, max_len)?
    } else {
        beam_decode(model, src, opts.beam_width, max_len)?
    };
    let text = tokenizer.decode(&out.ids)?;
    let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
    Ok(Transliteration { text, truncated: out.truncated })
}

/// Normalizes, tokenizes and transliterates one line of Persian text.
pub fn transliterate<T: Scalar>(
    model: &TransducerModel<T>,
    tokenizer: &BpeTokenizer,
    persian: &str,
    opts: DecodeOptions,
) -> Result<Transliteration, PipelineError> {
    let normalized = normalize_persian(persian);
    if normalized.is_empty() {
        return Ok(Transliteration { text: String::new(), truncated: false });
    }
    transliterate_ids(model, tokenizer, &tokenizer.encode(&normalized), opts)
}
