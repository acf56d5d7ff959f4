//! Lexicon of homographs with several pronunciations, corpus annotation and
//! a context-keyword disambiguator for running without a model.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{to_phonemes, IntermediateAlphabet};
use crate::corpus::{split_words, CorpusEntry, HomographOccurrence};

/// Reading id used when a corpus pronunciation matches no lexicon reading.
pub const UNMATCHED_READING: &str = "?";

/// Default number of context words considered on each side.
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum HomographError {
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("lexicon entry {surface}: {reason}")]
    InvalidEntry { surface: String, reason: String },
    #[error("word {index} ({word:?}) is not a lexicon homograph")]
    NotAHomograph { index: usize, word: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reading {
    pub reading_id: String,
    pub pg: String,
    /// Persian keywords that signal this sense.
    #[serde(default)]
    pub context_attributes: BTreeSet<String>,
    /// 1 = most frequent reading.
    pub prior_rank: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LexiconLine {
    surface: String,
    readings: Vec<Reading>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HomographLexicon {
    entries: BTreeMap<String, Vec<Reading>>,
}

/// A corpus pronunciation that matched none of the lexicon readings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnmatchedReading {
    pub entry_id: String,
    pub word_index: usize,
    pub surface: String,
    pub pg_word: String,
}

impl HomographLexicon {
    /// Builds a lexicon, checking structure (not pronunciations; see [`Self::check`]).
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<Reading>)>) -> Result<Self, HomographError> {
        let mut map = BTreeMap::new();
        for (surface, readings) in entries {
            check_structure(&surface, &readings)?;
            if map.insert(surface.clone(), readings).is_some() {
                return Err(HomographError::InvalidEntry { surface, reason: "listed twice".into() });
            }
        }
        Ok(Self { entries: map })
    }

    pub fn parse(text: impl BufRead) -> Result<Self, HomographError> {
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LexiconLine = serde_json::from_str(&line)
                .map_err(|e| HomographError::ParseError { line: idx + 1, reason: e.to_string() })?;
            entries.push((parsed.surface, parsed.readings));
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HomographError> {
        Self::parse(BufReader::new(std::fs::File::open(path)?))
    }

    pub fn write(&self, mut out: impl Write) -> Result<(), HomographError> {
        for (surface, readings) in &self.entries {
            let line = LexiconLine { surface: surface.clone(), readings: readings.clone() };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Checks every reading's pronunciation against `alphabet`; returns all problems.
    pub fn check(&self, alphabet: &IntermediateAlphabet) -> Vec<HomographError> {
        self.entries
            .iter()
            .flat_map(|(surface, readings)| {
                readings.iter().filter_map(move |r| {
                    to_phonemes(&r.pg, alphabet).err().map(|e| HomographError::InvalidEntry {
                        surface: surface.clone(),
                        reason: format!("reading {} pg {:?}: {e}", r.reading_id, r.pg),
                    })
                })
            })
            .collect()
    }

    pub fn readings(&self, surface: &str) -> Option<&[Reading]> {
        self.entries.get(surface).map(Vec::as_slice)
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.entries.contains_key(surface)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Reading])> {
        self.entries.iter().map(|(s, r)| (s.as_str(), r.as_slice()))
    }
}

fn check_structure(surface: &str, readings: &[Reading]) -> Result<(), HomographError> {
    let fail = |reason: String| HomographError::InvalidEntry { surface: surface.to_string(), reason };
    if readings.len() < 2 {
        return Err(fail(format!("{} reading(s); a homograph needs at least 2", readings.len())));
    }
    let mut ids = HashSet::new();
    for r in readings {
        if !ids.insert(r.reading_id.as_str()) {
            return Err(fail(format!("duplicate reading id {}", r.reading_id)));
        }
    }
    let mut ranks: Vec<u32> = readings.iter().map(|r| r.prior_rank).collect();
    ranks.sort_unstable();
    if ranks.iter().enumerate().any(|(i, &r)| r as usize != i + 1) {
        return Err(fail(format!("prior ranks {ranks:?} are not a permutation of 1..={}", readings.len())));
    }
    Ok(())
}

fn strip_ezafe(word: &str, has_ezafe: bool) -> &str {
    if has_ezafe {
        word.strip_suffix('e').unwrap_or(word)
    } else {
        word
    }
}

/// Annotates every lexicon word of `entry.fa` with the reading whose
/// pronunciation matches the aligned `pg` word.
///
/// Existing annotations at those indices are replaced, so running twice
/// gives the same result. Pronunciations matching no reading are annotated
/// with [`UNMATCHED_READING`] and reported.
pub fn annotate_homographs(entry: &CorpusEntry, lexicon: &HomographLexicon) -> (CorpusEntry, Vec<UnmatchedReading>) {
    let fa = split_words(&entry.fa);
    let pg = split_words(&entry.pg);
    let mut by_index: BTreeMap<usize, HomographOccurrence> =
        entry.homographs.iter().map(|h| (h.word_index, h.clone())).collect();
    let mut unmatched = Vec::new();
    for (idx, surface) in fa.iter().enumerate() {
        let Some(readings) = lexicon.readings(surface) else { continue };
        let Some(pg_word) = pg.get(idx) else { continue };
        let spoken = strip_ezafe(pg_word, entry.ezafe.contains(&idx));
        let reading_id = match readings.iter().find(|r| r.pg == spoken || r.pg == *pg_word) {
            Some(r) => r.reading_id.clone(),
            None => {
                unmatched.push(UnmatchedReading {
                    entry_id: entry.id.clone(),
                    word_index: idx,
                    surface: surface.to_string(),
                    pg_word: pg_word.to_string(),
                });
                UNMATCHED_READING.to_string()
            }
        };
        by_index.insert(idx, HomographOccurrence { word_index: idx, surface: surface.to_string(), reading_id });
    }
    let mut out = entry.clone();
    out.homographs = by_index.into_values().collect();
    (out, unmatched)
}

/// Picks a reading for `words[index]` by counting context keywords within
/// `window` words on either side; ties go to the lower `prior_rank`.
pub fn disambiguate_rule_based<'a, S: AsRef<str>>(
    words: &[S],
    index: usize,
    lexicon: &'a HomographLexicon,
    window: usize,
) -> Result<&'a Reading, HomographError> {
    let not_homograph = || HomographError::NotAHomograph {
        index,
        word: words.get(index).map(|w| w.as_ref().to_string()).unwrap_or_default(),
    };
    let surface = words.get(index).ok_or_else(not_homograph)?.as_ref();
    let readings = lexicon.readings(surface).ok_or_else(not_homograph)?;
    let lo = index.saturating_sub(window);
    let hi = (index + window + 1).min(words.len());
    let context: HashSet<&str> = (lo..hi).filter(|&i| i != index).map(|i| words[i].as_ref()).collect();
    let best = readings
        .iter()
        .map(|r| (r.context_attributes.iter().filter(|a| context.contains(a.as_str())).count(), r))
        .max_by(|(sa, ra), (sb, rb)| sa.cmp(sb).then(rb.prior_rank.cmp(&ra.prior_rank)))
        .map(|(_, r)| r)
        .expect("lexicon entries have at least two readings");
    Ok(best)
}
