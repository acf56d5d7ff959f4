//! Parallel Persian/Pinglish corpus: records, JSON Lines I/O, deterministic
//! splitting and Ezafe-aware augmentation.

mod augment;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{to_phonemes, IntermediateAlphabet, SEPARATOR};
use crate::provenance::ArtifactMeta;

pub use augment::{augment, merge_entries, split_at_non_ezafe, split_corpus, split_entry_at, AugmentConfig};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("entry {id}: {reason}")]
    InvariantViolation { id: String, reason: String },
    #[error("need more than {requested} entries for validation and test, corpus has {available}")]
    InsufficientData { requested: usize, available: usize },
    #[error("cannot merge {a} ({a_register}) with {b} ({b_register})")]
    RegisterMismatch { a: String, a_register: Register, b: String, b_register: Register },
    #[error("augmentation stalled at {reached} of {target} training entries")]
    TargetUnreachable { reached: usize, target: usize },
    #[error("target size {target} is below the current training size {current}")]
    TargetBelowCurrent { target: usize, current: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Register {
    Formal,
    Informal,
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Register::Formal => "formal",
            Register::Informal => "informal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A homograph occurrence: which word, its written form and the reading used.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HomographOccurrence {
    pub word_index: usize,
    pub surface: String,
    pub reading_id: String,
}

/// One aligned sentence pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub fa: String,
    pub pg: String,
    /// Word indices (over `pg`) that carry Ezafe.
    #[serde(default)]
    pub ezafe: BTreeSet<usize>,
    #[serde(default)]
    pub homographs: Vec<HomographOccurrence>,
    pub register: Register,
}

impl CorpusEntry {
    pub fn pg_words(&self) -> Vec<&str> {
        split_words(&self.pg)
    }

    pub fn fa_words(&self) -> Vec<&str> {
        split_words(&self.fa)
    }

    pub fn word_count(&self) -> usize {
        self.pg_words().len()
    }

    /// Checks the record-level invariants against `alphabet`.
    pub fn check(&self, alphabet: &IntermediateAlphabet) -> Result<(), CorpusError> {
        let fail = |reason: String| CorpusError::InvariantViolation { id: self.id.clone(), reason };
        if self.id.is_empty() {
            return Err(fail("empty id".into()));
        }
        to_phonemes(&self.pg, alphabet).map_err(|e| fail(format!("pg {:?}: {e}", self.pg)))?;
        let words = self.word_count();
        if words == 0 {
            return Err(fail("empty pg".into()));
        }
        if let Some(&i) = self.ezafe.iter().find(|&&i| i >= words) {
            return Err(fail(format!("ezafe index {i} out of range for {words} words")));
        }
        if self.ezafe.contains(&(words - 1)) {
            return Err(fail("ezafe on the last word".into()));
        }
        if let Some(h) = self.homographs.iter().find(|h| h.word_index >= words) {
            return Err(fail(format!("homograph index {} out of range for {words} words", h.word_index)));
        }
        Ok(())
    }
}

pub(crate) fn split_words(text: &str) -> Vec<&str> {
    text.split(SEPARATOR).filter(|w| !w.is_empty()).collect()
}

/// Ordered entries plus an optional train/val/test labeling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParallelCorpus {
    pub entries: Vec<CorpusEntry>,
    pub split_labels: BTreeMap<String, Split>,
}

impl ParallelCorpus {
    pub fn new(entries: Vec<CorpusEntry>) -> Self {
        Self { entries, split_labels: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        !self.split_labels.is_empty()
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split_labels.get(id).copied()
    }

    /// Entries labeled `split`, in corpus order.
    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| self.split_of(&e.id) == Some(split))
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries_in(split).count()
    }

    /// Checks every entry, id uniqueness and, if labeled, that labels
    /// cover exactly the id set.
    pub fn check(&self, alphabet: &IntermediateAlphabet) -> Result<(), CorpusError> {
        let mut ids = HashSet::with_capacity(self.entries.len());
        for entry in &self.entries {
            entry.check(alphabet)?;
            if !ids.insert(entry.id.as_str()) {
                return Err(CorpusError::InvariantViolation { id: entry.id.clone(), reason: "duplicate id".into() });
            }
        }
        if self.is_labeled() {
            if let Some(e) = self.entries.iter().find(|e| !self.split_labels.contains_key(&e.id)) {
                return Err(CorpusError::InvariantViolation { id: e.id.clone(), reason: "missing split label".into() });
            }
            if let Some(id) = self.split_labels.keys().find(|id| !ids.contains(id.as_str())) {
                return Err(CorpusError::InvariantViolation {
                    id: id.clone(),
                    reason: "split label for unknown id".into(),
                });
            }
        }
        Ok(())
    }
}

/// Something that can produce corpus entries: a file, a generator, or an
/// external scraper plugged in by the caller.
pub trait CorpusSource {
    fn load(&mut self) -> Result<ParallelCorpus, CorpusError>;
}

/// Reads a JSON Lines corpus file.
pub struct JsonlSource<'a> {
    pub path: std::path::PathBuf,
    pub alphabet: &'a IntermediateAlphabet,
}

impl CorpusSource for JsonlSource<'_> {
    fn load(&mut self) -> Result<ParallelCorpus, CorpusError> {
        load_corpus(&self.path, self.alphabet)
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(flatten)]
    entry: CorpusEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

#[derive(Serialize)]
struct MetaLine<'a> {
    meta: &'a ArtifactMeta,
}

/// Parses JSON Lines corpus text. A leading `{"meta": …}` line is skipped.
pub fn parse_corpus(text: impl BufRead, alphabet: &IntermediateAlphabet) -> Result<ParallelCorpus, CorpusError> {
    let mut corpus = ParallelCorpus::default();
    let mut labeled = 0usize;
    let mut ids = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| CorpusError::ParseError { line: line_no, reason: e.to_string() })?;
        if value.get("meta").is_some() && value.get("id").is_none() {
            continue;
        }
        let record: Record = serde_json::from_value(value)
            .map_err(|e| CorpusError::ParseError { line: line_no, reason: e.to_string() })?;
        record.entry.check(alphabet)?;
        if !ids.insert(record.entry.id.clone()) {
            return Err(CorpusError::InvariantViolation {
                id: record.entry.id,
                reason: format!("duplicate id on line {line_no}"),
            });
        }
        if let Some(split) = record.split {
            labeled += 1;
            corpus.split_labels.insert(record.entry.id.clone(), split);
        }
        corpus.entries.push(record.entry);
    }
    if labeled != 0 && labeled != corpus.entries.len() {
        let unlabeled =
            corpus.entries.iter().find(|e| !corpus.split_labels.contains_key(&e.id)).expect("some entry is unlabeled");
        return Err(CorpusError::InvariantViolation {
            id: unlabeled.id.clone(),
            reason: "corpus mixes labeled and unlabeled records".into(),
        });
    }
    Ok(corpus)
}

pub fn load_corpus(path: impl AsRef<Path>, alphabet: &IntermediateAlphabet) -> Result<ParallelCorpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    parse_corpus(BufReader::new(file), alphabet)
}

/// Writes JSON Lines; split labels are included when the corpus has them.
pub fn write_corpus(
    mut out: impl Write,
    corpus: &ParallelCorpus,
    meta: Option<&ArtifactMeta>,
) -> Result<(), CorpusError> {
    if let Some(meta) = meta {
        serde_json::to_writer(&mut out, &MetaLine { meta }).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    for entry in &corpus.entries {
        let record = Record { entry: entry.clone(), split: corpus.split_of(&entry.id) };
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_corpus(
    path: impl AsRef<Path>,
    corpus: &ParallelCorpus,
    meta: Option<&ArtifactMeta>,
) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    write_corpus(std::io::BufWriter::new(file), corpus, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> IntermediateAlphabet {
        IntermediateAlphabet::default_alphabet()
    }

    const THREE: &str = r#"{"id":"a","fa":"کتاب خوب است","pg":"ketAbe ķUb ast","ezafe":[0],"homographs":[],"register":"formal"}
{"id":"b","fa":"ببر آمد","pg":"babr Amad","ezafe":[],"homographs":[{"word_index":0,"surface":"ببر","reading_id":"tiger"}],"register":"formal"}
{"id":"c","fa":"کتابا خوبه","pg":"ketAbA ķUbe","register":"informal"}
"#;

    #[test]
    fn well_formed_file_parses() {
        let corpus = parse_corpus(THREE.as_bytes(), &abc()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert!(!corpus.is_labeled());
        assert_eq!(corpus.entries[0].ezafe, BTreeSet::from([0]));
        assert_eq!(corpus.entries[1].homographs[0].reading_id, "tiger");
        assert_eq!(corpus.entries[2].register, Register::Informal);
    }

    #[test]
    fn ezafe_out_of_range_is_rejected() {
        let line = r#"{"id":"a","fa":"x y","pg":"ab ba","ezafe":[2],"register":"formal"}"#;
        let err = parse_corpus(line.as_bytes(), &abc()).unwrap_err();
        assert!(matches!(err, CorpusError::InvariantViolation { ref id, .. } if id == "a"), "{err}");
    }

    #[test]
    fn ezafe_on_last_word_is_rejected() {
        let line = r#"{"id":"a","fa":"x y","pg":"ab ba","ezafe":[1],"register":"formal"}"#;
        assert!(matches!(parse_corpus(line.as_bytes(), &abc()), Err(CorpusError::InvariantViolation { .. })));
    }

    #[test]
    fn excluded_letter_in_pg_is_rejected() {
        let line = r#"{"id":"k","fa":"خواب","pg":"xAb","register":"formal"}"#;
        let err = parse_corpus(line.as_bytes(), &abc()).unwrap_err();
        assert!(matches!(err, CorpusError::InvariantViolation { ref id, .. } if id == "k"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = format!("{}\n{{not json\n", THREE.lines().next().unwrap());
        assert!(matches!(parse_corpus(text.as_bytes(), &abc()), Err(CorpusError::ParseError { line: 2, .. })));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let line = THREE.lines().next().unwrap();
        let text = format!("{line}\n{line}\n");
        assert!(matches!(parse_corpus(text.as_bytes(), &abc()), Err(CorpusError::InvariantViolation { .. })));
    }

    #[test]
    fn write_then_parse_preserves_labels_and_skips_meta() {
        let mut corpus = parse_corpus(THREE.as_bytes(), &abc()).unwrap();
        corpus.split_labels.insert("a".into(), Split::Train);
        corpus.split_labels.insert("b".into(), Split::Val);
        corpus.split_labels.insert("c".into(), Split::Test);
        let meta = ArtifactMeta::new(&"cfg", Some(7));
        let mut buf = Vec::new();
        write_corpus(&mut buf, &corpus, Some(&meta)).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("{\"meta\""));
        let back = parse_corpus(buf.as_slice(), &abc()).unwrap();
        assert_eq!(back, corpus);
    }
}
