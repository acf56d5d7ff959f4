//! Byte-pair-encoding tokenizer with a hard cap on subword length.
//!
//! Training runs the usual merge loop over whitespace-delimited words with
//! two extra rules: a candidate pair whose concatenation is longer than
//! `max_token_len` characters is skipped, and training stops once the best
//! remaining pair is rarer than `min_frequency` or the vocabulary is full.
//! Lengths are counted in Unicode scalar values.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provenance::ArtifactMeta;

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// What [`BpeTokenizer::decode`] emits for the unknown token.
pub const UNK_REPLACEMENT: char = '\u{FFFD}';

const FORMAT_HEADER: &str = "g2p-bpe";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot interleave {fa} Persian lines with {pg} Pinglish lines")]
    LengthMismatch { fa: usize, pg: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("token id {0} is outside the vocabulary")]
    UnknownId(u32),
    #[error("tokenizer file version {found}, expected {FORMAT_VERSION}")]
    FormatVersionMismatch { found: u32 },
    #[error("corrupt tokenizer file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpeConfig {
    /// Upper bound on the vocabulary, special tokens included.
    pub vocab_limit: usize,
    pub min_frequency: usize,
    pub max_token_len: usize,
}

impl Default for BpeConfig {
    fn default() -> Self {
        Self { vocab_limit: 2372, min_frequency: 100, max_token_len: 3 }
    }
}

/// `[fa0, pg0, fa1, pg1, …]`.
pub fn interleave<S: AsRef<str>>(fa: &[S], pg: &[S]) -> Result<Vec<String>, TokenizerError> {
    if fa.len() != pg.len() {
        return Err(TokenizerError::LengthMismatch { fa: fa.len(), pg: pg.len() });
    }
    Ok(fa.iter().zip(pg).flat_map(|(f, p)| [f.as_ref().to_string(), p.as_ref().to_string()]).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeTokenizer {
    config: BpeConfig,
    tokens: Vec<String>,
    vocab: HashMap<String, u32>,
    merges: Vec<(String, String)>,
    /// (left id, right id) -> (rank, merged id)
    merge_table: HashMap<(u32, u32), (usize, u32)>,
}

impl BpeTokenizer {
    fn from_parts(
        config: BpeConfig,
        tokens: Vec<String>,
        merges: Vec<(String, String)>,
    ) -> Result<Self, TokenizerError> {
        let corrupt = |m: String| TokenizerError::CorruptFile(m);
        if tokens.len() < SPECIAL_TOKENS.len() || tokens.iter().zip(SPECIAL_TOKENS).any(|(t, s)| t != s) {
            return Err(corrupt("special tokens missing from the low ids".into()));
        }
        let mut vocab = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(corrupt(format!("empty token at id {id}")));
            }
            if id >= SPECIAL_TOKENS.len() && tok.chars().count() > config.max_token_len {
                return Err(corrupt(format!("token {tok:?} longer than {}", config.max_token_len)));
            }
            if vocab.insert(tok.clone(), id as u32).is_some() {
                return Err(corrupt(format!("duplicate token {tok:?}")));
            }
        }
        let mut merge_table = HashMap::with_capacity(merges.len());
        for (rank, (l, r)) in merges.iter().enumerate() {
            let lookup = |t: &str| vocab.get(t).copied();
            match (lookup(l), lookup(r), lookup(&format!("{l}{r}"))) {
                (Some(a), Some(b), Some(m)) => {
                    merge_table.entry((a, b)).or_insert((rank, m));
                }
                _ => return Err(corrupt(format!("merge {l:?} + {r:?} not backed by the vocabulary"))),
            }
        }
        Ok(Self { config, tokens, vocab, merges, merge_table })
    }

    pub fn config(&self) -> BpeConfig {
        self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.vocab.get(token).copied()
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIAL_TOKENS.len()
    }

    /// Learns merges from `lines`. Pure function of its inputs.
    pub fn train<S: AsRef<str> + Sync>(lines: &[S], config: BpeConfig) -> Result<Self, TokenizerError> {
        if lines.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut alphabet: BTreeSet<char> = BTreeSet::from([' ']);
        for line in lines {
            let line = line.as_ref();
            alphabet.extend(line.chars());
            for word in line.split_whitespace() {
                *word_counts.entry(word).or_default() += 1;
            }
        }

        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(alphabet.iter().map(char::to_string));
        let mut vocab: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let mut token_len: Vec<usize> = tokens.iter().map(|t| t.chars().count()).collect();

        let mut words: Vec<(Vec<u32>, usize)> =
            word_counts.iter().map(|(w, &c)| (w.chars().map(|ch| vocab[&ch.to_string()]).collect(), c)).collect();
        let mut merges = Vec::new();

        while tokens.len() < config.vocab_limit {
            let counts = words
                .par_iter()
                .fold(HashMap::new, |mut acc: HashMap<(u32, u32), usize>, (syms, c)| {
                    for pair in syms.windows(2) {
                        *acc.entry((pair[0], pair[1])).or_default() += c;
                    }
                    acc
                })
                .reduce(HashMap::new, |mut a, b| {
                    for (k, v) in b {
                        *a.entry(k).or_default() += v;
                    }
                    a
                });
            let best = counts
                .iter()
                .filter(|((a, b), _)| token_len[*a as usize] + token_len[*b as usize] <= config.max_token_len)
                .filter(|((a, b), _)| {
                    let joined = format!("{}{}", tokens[*a as usize], tokens[*b as usize]);
                    !SPECIAL_TOKENS.contains(&joined.as_str())
                })
                .max_by(|(ka, ca), (kb, cb)| {
                    ca.cmp(cb).then_with(|| {
                        // lexicographically smaller pair wins the tie
                        let sa = (&tokens[ka.0 as usize], &tokens[ka.1 as usize]);
                        let sb = (&tokens[kb.0 as usize], &tokens[kb.1 as usize]);
                        sb.cmp(&sa)
                    })
                });
            let Some((&(a, b), &count)) = best else { break };
            if count < config.min_frequency {
                break;
            }
            let joined = format!("{}{}", tokens[a as usize], tokens[b as usize]);
            let merged = match vocab.get(&joined) {
                Some(&id) => id,
                None => {
                    let id = tokens.len() as u32;
                    vocab.insert(joined.clone(), id);
                    token_len.push(joined.chars().count());
                    tokens.push(joined);
                    id
                }
            };
            merges.push((tokens[a as usize].clone(), tokens[b as usize].clone()));
            words.par_iter_mut().for_each(|(syms, _)| apply_merge(syms, a, b, merged));
        }
        Self::from_parts(config, tokens, merges)
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let mut syms: Vec<u32> = word
            .chars()
            .map(|ch| self.vocab.get(ch.encode_utf8(&mut [0; 4]) as &str).copied().unwrap_or(UNK_ID))
            .collect();
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.merge_table.get(&(p[0], p[1])).map(|&(rank, m)| (rank, p[0], p[1], m)))
                .min();
            match best {
                Some((_, a, b, m)) => apply_merge(&mut syms, a, b, m),
                None => break,
            }
        }
        out.extend(syms);
    }

    /// Token ids for `text`. Whitespace characters are their own tokens;
    /// characters outside the vocabulary become [`UNK_ID`].
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::with_capacity(text.len());
        let mut word_start = None;
        for (pos, ch) in text.char_indices() {
            if ch.is_whitespace() {
                if let Some(start) = word_start.take() {
                    self.encode_word(&text[start..pos], &mut out);
                }
                out.push(self.vocab.get(ch.encode_utf8(&mut [0; 4]) as &str).copied().unwrap_or(UNK_ID));
            } else if word_start.is_none() {
                word_start = Some(pos);
            }
        }
        if let Some(start) = word_start {
            self.encode_word(&text[start..], &mut out);
        }
        out
    }

    /// Concatenates token strings. PAD/BOS/EOS decode to nothing and UNK to
    /// [`UNK_REPLACEMENT`].
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut out = String::new();
        for &id in ids {
            match id {
                UNK_ID => out.push(UNK_REPLACEMENT),
                PAD_ID | BOS_ID | EOS_ID => {}
                _ => out.push_str(self.token(id).ok_or(TokenizerError::UnknownId(id))?),
            }
        }
        Ok(out)
    }

    /// Renders the versioned text format.
    pub fn to_file_string(&self) -> String {
        let meta = ArtifactMeta::new(&self.config, None);
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_HEADER} v{FORMAT_VERSION}");
        let _ = writeln!(s, "# tool {}", meta.tool);
        let _ = writeln!(s, "# config_digest {}", meta.config_digest);
        let _ = writeln!(s, "# seed none");
        let _ = writeln!(s, "vocab_limit\t{}", self.config.vocab_limit);
        let _ = writeln!(s, "min_frequency\t{}", self.config.min_frequency);
        let _ = writeln!(s, "max_token_len\t{}", self.config.max_token_len);
        let _ = writeln!(s, "vocab_size\t{}", self.tokens.len());
        let _ = writeln!(s, "merge_count\t{}", self.merges.len());
        s.push_str("[vocab]\n");
        for (id, tok) in self.tokens.iter().enumerate() {
            let _ = writeln!(s, "{}\t{id}", escape(tok));
        }
        s.push_str("[merges]\n");
        for (l, r) in &self.merges {
            let _ = writeln!(s, "{}\t{}", escape(l), escape(r));
        }
        s.push_str("[end]\n");
        s
    }

    pub fn from_file_string(text: &str) -> Result<Self, TokenizerError> {
        let corrupt = |m: &str| TokenizerError::CorruptFile(m.to_string());
        let mut lines = text.split('\n');
        let header = lines.next().ok_or_else(|| corrupt("empty file"))?;
        let version = header
            .strip_prefix(FORMAT_HEADER)
            .and_then(|r| r.strip_prefix(" v"))
            .ok_or_else(|| corrupt("missing header"))?;
        let version: u32 = version.trim().parse().map_err(|_| corrupt("bad version"))?;
        if version != FORMAT_VERSION {
            return Err(TokenizerError::FormatVersionMismatch { found: version });
        }

        let mut fields: HashMap<&str, usize> = HashMap::new();
        let mut section = "";
        let mut tokens = Vec::new();
        let mut merges = Vec::new();
        let mut ended = false;
        for line in lines {
            if ended {
                if line.is_empty() {
                    continue;
                }
                return Err(corrupt("content after [end]"));
            }
            match line {
                "[vocab]" | "[merges]" => {
                    section = line;
                    continue;
                }
                "[end]" => {
                    ended = true;
                    continue;
                }
                _ => {}
            }
            match section {
                "" => {
                    if line.starts_with('#') || line.is_empty() {
                        continue;
                    }
                    let (k, v) = line.split_once('\t').ok_or_else(|| corrupt("bad config line"))?;
                    fields.insert(k, v.parse().map_err(|_| corrupt("bad config value"))?);
                }
                "[vocab]" => {
                    let (tok, id) = line.rsplit_once('\t').ok_or_else(|| corrupt("bad vocab line"))?;
                    let id: usize = id.parse().map_err(|_| corrupt("bad vocab id"))?;
                    if id != tokens.len() {
                        return Err(corrupt("vocab ids are not dense"));
                    }
                    tokens.push(unescape(tok).ok_or_else(|| corrupt("bad escape"))?);
                }
                _ => {
                    let (l, r) = line.split_once('\t').ok_or_else(|| corrupt("bad merge line"))?;
                    merges.push((
                        unescape(l).ok_or_else(|| corrupt("bad escape"))?,
                        unescape(r).ok_or_else(|| corrupt("bad escape"))?,
                    ));
                }
            }
        }
        if !ended {
            return Err(corrupt("truncated (no [end] marker)"));
        }
        let field = |k: &str| fields.get(k).copied().ok_or_else(|| corrupt(&format!("missing {k}")));
        let config = BpeConfig {
            vocab_limit: field("vocab_limit")?,
            min_frequency: field("min_frequency")?,
            max_token_len: field("max_token_len")?,
        };
        if field("vocab_size")? != tokens.len() || field("merge_count")? != merges.len() {
            return Err(corrupt("section sizes disagree with header"));
        }
        Self::from_parts(config, tokens, merges)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes).map_err(|_| TokenizerError::CorruptFile("not UTF-8".into()))?;
        Self::from_file_string(&text)
    }
}

pub fn save_tokenizer(tok: &BpeTokenizer, path: impl AsRef<Path>) -> Result<(), TokenizerError> {
    tok.save(path)
}

pub fn load_tokenizer(path: impl AsRef<Path>) -> Result<BpeTokenizer, TokenizerError> {
    BpeTokenizer::load(path)
}

fn apply_merge(syms: &mut Vec<u32>, a: u32, b: u32, merged: u32) {
    let mut i = 0;
    let mut j = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
            syms[j] = merged;
            i += 2;
        } else {
            syms[j] = syms[i];
            i += 1;
        }
        j += 1;
    }
    syms.truncate(j);
}

fn escape(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for ch in token.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(ch),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}
