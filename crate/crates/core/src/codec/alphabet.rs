use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use super::CodecError;

/// Characters that may never appear in the intermediate alphabet.
pub const EXCLUDED_CHARS: [char; 5] = ['c', 'u', 'q', 'w', 'x'];

/// Word-boundary character of Pinglish text.
pub const SEPARATOR: char = ' ';

const DEFAULT_TABLE: &str = include_str!("../../data/alphabet.tsv");

/// Unvalidated alphabet as read from a config file.
///
/// Targets are kept as strings so that multi-codepoint entries can be
/// reported by [`validate_alphabet`] instead of failing at parse time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphabetTable {
    pub phonemes: Vec<(String, String)>,
    pub digraphs: Vec<(String, String)>,
}

/// One broken constraint of an [`AlphabetTable`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlphabetViolation {
    ExcludedCharacterUsed {
        phoneme: String,
        ch: char,
    },
    DuplicateTargetCharacter {
        ch: char,
        phonemes: Vec<String>,
    },
    MultiCodepointTarget {
        phoneme: String,
        target: String,
    },
    UnknownDigraphTarget {
        source: String,
        target: String,
    },
    DuplicatePhonemeName {
        phoneme: String,
    },
    SeparatorMapped {
        phoneme: String,
    },
    EmptyDigraphSource {
        target: String,
    },
    /// A rule rewrites into a character that another one-character rule
    /// would rewrite again; canonicalization could cycle.
    ChainedDigraphRule {
        source: String,
        target: String,
    },
}

impl fmt::Display for AlphabetViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ExcludedCharacterUsed { phoneme, ch } => {
                write!(f, "phoneme {phoneme} maps to excluded character {ch:?}")
            }
            Self::DuplicateTargetCharacter { ch, phonemes } => {
                write!(f, "character {ch:?} is shared by {}", phonemes.join(", "))
            }
            Self::MultiCodepointTarget { phoneme, target } => {
                write!(f, "phoneme {phoneme} maps to {target:?}, not exactly one code point")
            }
            Self::UnknownDigraphTarget { source, target } => {
                write!(f, "rule {source:?} -> {target:?} targets no alphabet character")
            }
            Self::DuplicatePhonemeName { phoneme } => write!(f, "phoneme {phoneme} listed twice"),
            Self::SeparatorMapped { phoneme } => {
                write!(f, "phoneme {phoneme} maps to the word separator")
            }
            Self::EmptyDigraphSource { target } => write!(f, "rule with empty source -> {target:?}"),
            Self::ChainedDigraphRule { source, target } => {
                write!(f, "rule {source:?} -> {target:?} feeds another rule")
            }
        }
    }
}

impl AlphabetTable {
    /// Parses the tab-separated alphabet config format (see `data/alphabet.tsv`).
    pub fn parse(text: &str) -> Result<Self, CodecError> {
        let mut phonemes = Vec::new();
        let mut digraphs = Vec::new();
        let mut in_digraphs = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if trimmed.starts_with('[') {
                if trimmed == "[digraphs]" {
                    in_digraphs = true;
                    continue;
                }
                return Err(CodecError::AlphabetFormat { line: line_no, reason: format!("unknown section {trimmed}") });
            }
            let (left, right) = line.split_once('\t').ok_or_else(|| CodecError::AlphabetFormat {
                line: line_no,
                reason: "expected <key><TAB><value>".into(),
            })?;
            if right.contains('\t') {
                return Err(CodecError::AlphabetFormat { line: line_no, reason: "more than two columns".into() });
            }
            let pair = (left.to_string(), right.to_string());
            if in_digraphs {
                digraphs.push(pair);
            } else {
                if left.trim().is_empty() {
                    return Err(CodecError::AlphabetFormat { line: line_no, reason: "empty phoneme name".into() });
                }
                phonemes.push(pair);
            }
        }
        Ok(Self { phonemes, digraphs })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CodecError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// The shipped 29-phoneme table.
    pub fn default_table() -> Self {
        Self::parse(DEFAULT_TABLE).expect("bundled alphabet parses")
    }

    /// Serializes back to the config format.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (name, target) in &self.phonemes {
            out.push_str(&format!("{name}\t{target}\n"));
        }
        out.push_str("[digraphs]\n");
        for (source, target) in &self.digraphs {
            out.push_str(&format!("{source}\t{target}\n"));
        }
        out
    }
}

fn single_char(s: &str) -> Option<char> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

/// Checks every alphabet constraint and returns all violations found.
pub fn validate_alphabet(table: &AlphabetTable) -> Result<(), Vec<AlphabetViolation>> {
    let mut violations = Vec::new();
    let mut seen_names = HashSet::new();
    let mut by_char: BTreeMap<char, Vec<String>> = BTreeMap::new();

    for (name, target) in &table.phonemes {
        if !seen_names.insert(name.as_str()) {
            violations.push(AlphabetViolation::DuplicatePhonemeName { phoneme: name.clone() });
        }
        let Some(ch) = single_char(target) else {
            violations.push(AlphabetViolation::MultiCodepointTarget { phoneme: name.clone(), target: target.clone() });
            continue;
        };
        if EXCLUDED_CHARS.contains(&ch) {
            violations.push(AlphabetViolation::ExcludedCharacterUsed { phoneme: name.clone(), ch });
        }
        if ch == SEPARATOR {
            violations.push(AlphabetViolation::SeparatorMapped { phoneme: name.clone() });
        }
        by_char.entry(ch).or_default().push(name.clone());
    }
    for (ch, names) in &by_char {
        if names.len() > 1 {
            violations.push(AlphabetViolation::DuplicateTargetCharacter { ch: *ch, phonemes: names.clone() });
        }
    }

    let single_sources: HashSet<char> = table.digraphs.iter().filter_map(|(s, _)| single_char(s)).collect();
    for (source, target) in &table.digraphs {
        if source.is_empty() {
            violations.push(AlphabetViolation::EmptyDigraphSource { target: target.clone() });
        }
        match single_char(target) {
            Some(ch) if by_char.contains_key(&ch) && !EXCLUDED_CHARS.contains(&ch) => {
                if single_sources.contains(&ch) {
                    violations
                        .push(AlphabetViolation::ChainedDigraphRule { source: source.clone(), target: target.clone() });
                }
            }
            _ => violations
                .push(AlphabetViolation::UnknownDigraphTarget { source: source.clone(), target: target.clone() }),
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Index of a phoneme within its [`IntermediateAlphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhonemeId(pub u16);

/// A validated, bijective phoneme/character table plus canonicalization rules.
#[derive(Debug, Clone)]
pub struct IntermediateAlphabet {
    names: Vec<String>,
    chars: Vec<char>,
    char_to_id: HashMap<char, PhonemeId>,
    name_to_id: HashMap<String, PhonemeId>,
    /// Sorted by source length (descending), then by declaration order.
    rules: Vec<(Vec<char>, char)>,
    table: AlphabetTable,
}

impl IntermediateAlphabet {
    pub fn from_table(table: AlphabetTable) -> Result<Self, CodecError> {
        validate_alphabet(&table).map_err(CodecError::InvalidAlphabet)?;
        let mut names = Vec::with_capacity(table.phonemes.len());
        let mut chars = Vec::with_capacity(table.phonemes.len());
        let mut char_to_id = HashMap::new();
        let mut name_to_id = HashMap::new();
        for (idx, (name, target)) in table.phonemes.iter().enumerate() {
            let id = PhonemeId(
                u16::try_from(idx)
                    .map_err(|_| CodecError::AlphabetFormat { line: 0, reason: "more than 65535 phonemes".into() })?,
            );
            let ch = single_char(target).expect("validated");
            names.push(name.clone());
            chars.push(ch);
            char_to_id.insert(ch, id);
            name_to_id.insert(name.clone(), id);
        }
        let mut rules: Vec<(usize, Vec<char>, char)> = table
            .digraphs
            .iter()
            .enumerate()
            .map(|(i, (s, t))| (i, s.chars().collect(), single_char(t).expect("validated")))
            .collect();
        rules.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
        Ok(Self {
            names,
            chars,
            char_to_id,
            name_to_id,
            rules: rules.into_iter().map(|(_, s, t)| (s, t)).collect(),
            table,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CodecError> {
        Self::from_table(AlphabetTable::load(path)?)
    }

    pub fn default_alphabet() -> Self {
        Self::from_table(AlphabetTable::default_table()).expect("bundled alphabet is valid")
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn table(&self) -> &AlphabetTable {
        &self.table
    }

    pub fn char_of(&self, id: PhonemeId) -> Option<char> {
        self.chars.get(usize::from(id.0)).copied()
    }

    pub fn name_of(&self, id: PhonemeId) -> Option<&str> {
        self.names.get(usize::from(id.0)).map(String::as_str)
    }

    pub fn id_of_char(&self, ch: char) -> Option<PhonemeId> {
        self.char_to_id.get(&ch).copied()
    }

    pub fn id_of_name(&self, name: &str) -> Option<PhonemeId> {
        self.name_to_id.get(name).copied()
    }

    /// Image of the phoneme mapping, in table order.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn contains_char(&self, ch: char) -> bool {
        self.char_to_id.contains_key(&ch)
    }

    pub(crate) fn rules(&self) -> &[(Vec<char>, char)] {
        &self.rules
    }
}

impl Default for IntermediateAlphabet {
    fn default() -> Self {
        Self::default_alphabet()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(phonemes: &[(&str, &str)], digraphs: &[(&str, &str)]) -> AlphabetTable {
        let own = |v: &[(&str, &str)]| v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect::<Vec<_>>();
        AlphabetTable { phonemes: own(phonemes), digraphs: own(digraphs) }
    }

    #[test]
    fn default_table_is_valid() {
        let table = AlphabetTable::default_table();
        assert_eq!(validate_alphabet(&table), Ok(()));
        assert_eq!(table.phonemes.len(), 29);
        let vowels = table.phonemes.iter().filter(|(n, _)| n.ends_with("_vowel")).count();
        assert_eq!(vowels, 6);
        let abc = IntermediateAlphabet::default_alphabet();
        assert_eq!(abc.id_of_char('ķ').and_then(|id| abc.name_of(id)), Some("x_voiceless_velar_fricative"));
        assert!(abc.contains_char('A'));
        assert!(abc.contains_char('U'));
    }

    #[test]
    fn excluded_character_is_reported() {
        let table = tiny(&[("x_fricative", "x"), ("a", "a")], &[]);
        let errs = validate_alphabet(&table).unwrap_err();
        assert!(errs.contains(&AlphabetViolation::ExcludedCharacterUsed { phoneme: "x_fricative".into(), ch: 'x' }));
    }

    #[test]
    fn duplicate_target_is_reported() {
        let table = tiny(&[("k1", "k"), ("k2", "k")], &[]);
        let errs = validate_alphabet(&table).unwrap_err();
        assert_eq!(
            errs,
            vec![AlphabetViolation::DuplicateTargetCharacter { ch: 'k', phonemes: vec!["k1".into(), "k2".into()] }]
        );
    }

    #[test]
    fn all_violations_are_collected() {
        let table = tiny(&[("a", "q"), ("b", "bb"), ("c", "k"), ("d", "k")], &[("zz", "z"), ("kk", "kk")]);
        let errs = validate_alphabet(&table).unwrap_err();
        assert!(errs.iter().any(|e| matches!(e, AlphabetViolation::ExcludedCharacterUsed { .. })));
        assert!(errs.iter().any(|e| matches!(e, AlphabetViolation::MultiCodepointTarget { .. })));
        assert!(errs.iter().any(|e| matches!(e, AlphabetViolation::DuplicateTargetCharacter { .. })));
        let unknown = errs.iter().filter(|e| matches!(e, AlphabetViolation::UnknownDigraphTarget { .. })).count();
        assert_eq!(unknown, 2);
    }

    #[test]
    fn chained_single_char_rules_are_rejected() {
        let table = tiny(&[("a", "a"), ("b", "b")], &[("a", "b"), ("b", "a")]);
        let errs = validate_alphabet(&table).unwrap_err();
        assert_eq!(errs.iter().filter(|e| matches!(e, AlphabetViolation::ChainedDigraphRule { .. })).count(), 2);
    }

    #[test]
    fn parse_roundtrips_through_config_string() {
        let table = AlphabetTable::default_table();
        assert_eq!(AlphabetTable::parse(&table.to_config_string()).unwrap(), table);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = AlphabetTable::parse("# c\na\ta\nbroken\n").unwrap_err();
        assert!(matches!(err, CodecError::AlphabetFormat { line: 3, .. }));
        let err = AlphabetTable::parse("[vowels]\n").unwrap_err();
        assert!(matches!(err, CodecError::AlphabetFormat { line: 1, .. }));
    }
}
