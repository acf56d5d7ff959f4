//! The intermediate phonemic alphabet ("Pinglish"): one character per
//! phoneme, validated tables, romanization canonicalization and the
//! string/phoneme-sequence bijection.

mod alphabet;
mod normalize;

use thiserror::Error;

pub use alphabet::{
    validate_alphabet, AlphabetTable, AlphabetViolation, IntermediateAlphabet, PhonemeId, EXCLUDED_CHARS, SEPARATOR,
};
pub use normalize::normalize_persian;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("alphabet config line {line}: {reason}")]
    AlphabetFormat { line: usize, reason: String },
    #[error("invalid alphabet: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidAlphabet(Vec<AlphabetViolation>),
    #[error("unmappable substring {text:?} at character {position}")]
    UnmappableSubstring { position: usize, text: String },
    #[error("unknown character {ch:?} at position {position}")]
    UnknownCharacter { position: usize, ch: char },
    #[error("empty word at position {position}")]
    EmptyWord { position: usize },
    #[error("unknown phoneme id {0}")]
    UnknownPhoneme(u16),
    #[error("malformed phoneme sequence: {0}")]
    MalformedSequence(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One unit of a [`PhonemeSequence`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhonemeToken {
    Phoneme(PhonemeId),
    Boundary,
}

/// Phonemes with word-boundary markers; never starts or ends with a
/// boundary and never holds two boundaries in a row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhonemeSequence {
    items: Vec<PhonemeToken>,
}

impl PhonemeSequence {
    pub fn new(items: Vec<PhonemeToken>) -> Result<Self, CodecError> {
        if items.first() == Some(&PhonemeToken::Boundary) {
            return Err(CodecError::MalformedSequence("leading boundary"));
        }
        if items.last() == Some(&PhonemeToken::Boundary) {
            return Err(CodecError::MalformedSequence("trailing boundary"));
        }
        if items.windows(2).any(|w| w[0] == PhonemeToken::Boundary && w[1] == PhonemeToken::Boundary) {
            return Err(CodecError::MalformedSequence("consecutive boundaries"));
        }
        Ok(Self { items })
    }

    /// Builds a sequence from phoneme names; `None` stands for a word boundary.
    pub fn from_names<'a>(
        alphabet: &IntermediateAlphabet,
        names: impl IntoIterator<Item = Option<&'a str>>,
    ) -> Result<Self, CodecError> {
        let items = names
            .into_iter()
            .map(|name| match name {
                None => Ok(PhonemeToken::Boundary),
                Some(n) => {
                    alphabet.id_of_name(n).map(PhonemeToken::Phoneme).ok_or(CodecError::UnknownPhoneme(u16::MAX))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(items)
    }

    pub fn items(&self) -> &[PhonemeToken] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn phoneme_count(&self) -> usize {
        self.items.iter().filter(|t| matches!(t, PhonemeToken::Phoneme(_))).count()
    }

    pub fn into_items(self) -> Vec<PhonemeToken> {
        self.items
    }
}

/// One leftmost-longest rewriting pass. Returns `None` if nothing matched.
fn rewrite_pass(input: &[char], alphabet: &IntermediateAlphabet) -> Option<Vec<char>> {
    let mut out = Vec::with_capacity(input.len());
    let mut changed = false;
    let mut pos = 0;
    while pos < input.len() {
        let rest = &input[pos..];
        match alphabet.rules().iter().find(|(source, _)| rest.starts_with(source)) {
            Some((source, target)) => {
                out.push(*target);
                pos += source.len();
                changed = true;
            }
            None => {
                out.push(input[pos]);
                pos += 1;
            }
        }
    }
    changed.then_some(out)
}

/// Rewrites a conventional romanization (e.g. `khaab`) into canonical
/// Pinglish (`ķAb`).
///
/// Whitespace runs collapse to one separator and the ends are trimmed.
/// Digraph rules are applied leftmost-longest until nothing changes, so
/// the result is a fixed point: canonicalizing it again is the identity.
pub fn canonicalize(raw: &str, alphabet: &IntermediateAlphabet) -> Result<String, CodecError> {
    let mut chars: Vec<char> = Vec::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !chars.is_empty() {
            chars.push(SEPARATOR);
        }
        chars.extend(word.chars());
    }
    // every changing pass either shortens the text or removes all
    // one-character rule sources, so this bound is never reached
    for _ in 0..=chars.len() + 1 {
        match rewrite_pass(&chars, alphabet) {
            Some(next) => chars = next,
            None => break,
        }
    }
    if let Some(position) = chars.iter().position(|&c| c != SEPARATOR && !alphabet.contains_char(c)) {
        let end = chars[position..]
            .iter()
            .position(|&c| c == SEPARATOR || alphabet.contains_char(c))
            .map_or(chars.len(), |n| position + n);
        return Err(CodecError::UnmappableSubstring { position, text: chars[position..end].iter().collect() });
    }
    Ok(chars.into_iter().collect())
}

/// Splits Pinglish text into one phoneme per character plus boundaries.
pub fn to_phonemes(text: &str, alphabet: &IntermediateAlphabet) -> Result<PhonemeSequence, CodecError> {
    let mut items = Vec::with_capacity(text.len());
    let mut last_was_boundary = true;
    for (position, ch) in text.chars().enumerate() {
        if ch == SEPARATOR {
            if last_was_boundary {
                return Err(CodecError::EmptyWord { position });
            }
            items.push(PhonemeToken::Boundary);
            last_was_boundary = true;
        } else {
            let id = alphabet.id_of_char(ch).ok_or(CodecError::UnknownCharacter { position, ch })?;
            items.push(PhonemeToken::Phoneme(id));
            last_was_boundary = false;
        }
    }
    if last_was_boundary && !items.is_empty() {
        return Err(CodecError::EmptyWord { position: items.len() });
    }
    Ok(PhonemeSequence { items })
}

/// Inverse of [`to_phonemes`].
pub fn from_phonemes(seq: &PhonemeSequence, alphabet: &IntermediateAlphabet) -> Result<String, CodecError> {
    seq.items()
        .iter()
        .map(|token| match token {
            PhonemeToken::Boundary => Ok(SEPARATOR),
            PhonemeToken::Phoneme(id) => alphabet.char_of(*id).ok_or(CodecError::UnknownPhoneme(id.0)),
        })
        .collect()
}

/// True if `text` is well-formed Pinglish under `alphabet`.
pub fn is_valid_pinglish(text: &str, alphabet: &IntermediateAlphabet) -> bool {
    to_phonemes(text, alphabet).is_ok()
}
