//! Deterministic generator for a small synthetic Persian/Pinglish corpus.
//!
//! Sentences are built from templates over a hand-written word list, so
//! Ezafe positions and homograph readings are known exactly. Used for the
//! bundled toy corpus and for tests.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::augment::split_corpus;
use super::{CorpusEntry, CorpusError, CorpusSource, HomographOccurrence, ParallelCorpus, Register};
use crate::codec::normalize_persian;

type Word = (&'static str, &'static str);

/// Consonant-final nouns, so Ezafe is always a bare `e` suffix.
const NOUNS: &[Word] = &[
    ("کتاب", "ketAb"),
    ("دست", "dast"),
    ("شب", "šab"),
    ("روز", "rUz"),
    ("شهر", "šahr"),
    ("بازار", "bAzAr"),
    ("دوست", "dUst"),
    ("پسر", "pesar"),
    ("دختر", "doķtar"),
    ("باغ", "bAğ"),
    ("کار", "kAr"),
    ("اسب", "asb"),
    ("خواب", "ķAb"),
    ("درخت", "deraķt"),
    ("آسمان", "AsemAn"),
    ("ماشین", "mAšin"),
    ("قلم", "ğalam"),
    ("معلم", "moʔallem"),
    ("رنگ", "rang"),
    ("نان", "nAn"),
    ("شیر", "šir"),
];

const ADJECTIVES: &[Word] = &[
    ("خوب", "ķUb"),
    ("بزرگ", "bozorg"),
    ("کوچک", "kUček"),
    ("زیبا", "zibA"),
    ("سفید", "sefid"),
    ("سیاه", "siyAh"),
    ("تازه", "tAze"),
    ("قشنگ", "ğašang"),
    ("بلند", "boland"),
    ("گرم", "garm"),
    ("سرد", "sard"),
    ("قدیمی", "ğadimi"),
    ("جدید", "jadid"),
];

/// Consonant-final adjectives, for the informal `-e` copula.
const ADJ_CONSONANT: &[Word] = &[
    ("خوب", "ķUb"),
    ("بزرگ", "bozorg"),
    ("کوچک", "kUček"),
    ("سفید", "sefid"),
    ("قشنگ", "ğašang"),
    ("بلند", "boland"),
    ("گرم", "garm"),
    ("سرد", "sard"),
    ("جدید", "jadid"),
];

const BE: &[Word] = &[("است", "ast"), ("بود", "bUd")];
const SEE: &[Word] = &[("دیدم", "didam"), ("خریدم", "ķaridam"), ("آوردم", "Avardam"), ("دارم", "dAram")];
const CUTTABLE: &[Word] = &[("نان", "nAn"), ("طناب", "tanAb"), ("کاغذ", "kAğaz")];
const PLACES: &[Word] = &[("جنگل", "jangal"), ("باغ", "bAğ"), ("شهر", "šahr")];

/// `(surface, reading_id, pg)` for every homograph the generator emits.
pub const HOMOGRAPH_READINGS: &[(&str, &str, &str)] = &[
    ("ببر", "tiger", "babr"),
    ("ببر", "carry", "bebar"),
    ("ببر", "cut", "bebor"),
    ("مرد", "man", "mard"),
    ("مرد", "died", "mord"),
    ("گل", "flower", "gol"),
    ("گل", "mud", "gel"),
];

struct Builder {
    fa: Vec<String>,
    pg: Vec<String>,
    ezafe: BTreeSet<usize>,
    homographs: Vec<HomographOccurrence>,
}

impl Builder {
    fn new() -> Self {
        Self { fa: vec![], pg: vec![], ezafe: BTreeSet::new(), homographs: vec![] }
    }

    fn word(&mut self, (fa, pg): Word) -> &mut Self {
        self.fa.push(fa.to_string());
        self.pg.push(pg.to_string());
        self
    }

    fn ezafe(&mut self, (fa, pg): Word) -> &mut Self {
        self.ezafe.insert(self.pg.len());
        self.fa.push(fa.to_string());
        self.pg.push(format!("{pg}e"));
        self
    }

    fn homograph(&mut self, reading: &str, with_ezafe: bool) -> &mut Self {
        let &(surface, id, pg) = HOMOGRAPH_READINGS.iter().find(|(_, r, _)| *r == reading).expect("known reading");
        self.homographs.push(HomographOccurrence {
            word_index: self.pg.len(),
            surface: surface.to_string(),
            reading_id: id.to_string(),
        });
        if with_ezafe {
            self.ezafe((surface, pg))
        } else {
            self.word((surface, pg))
        }
    }

    fn suffixed(&mut self, (fa, pg): Word, fa_suffix: &str, pg_suffix: &str) -> &mut Self {
        self.fa.push(format!("{fa}{fa_suffix}"));
        self.pg.push(format!("{pg}{pg_suffix}"));
        self
    }

    fn finish(&mut self, register: Register) -> CorpusEntry {
        CorpusEntry {
            id: String::new(),
            fa: normalize_persian(&self.fa.join(" ")),
            pg: self.pg.join(" "),
            ezafe: std::mem::take(&mut self.ezafe),
            homographs: std::mem::take(&mut self.homographs),
            register,
        }
    }
}

fn pick(rng: &mut ChaCha8Rng, words: &[Word]) -> Word {
    words[rng.random_range(0..words.len())]
}

fn sentence(rng: &mut ChaCha8Rng) -> CorpusEntry {
    let mut b = Builder::new();
    match rng.random_range(0..12) {
        // N-e ADJ is
        0 => b.ezafe(pick(rng, NOUNS)).word(pick(rng, ADJECTIVES)).word(pick(rng, BE)).finish(Register::Formal),
        // I N-e ADJ rA saw
        1 => b
            .word(("من", "man"))
            .ezafe(pick(rng, NOUNS))
            .word(pick(rng, ADJECTIVES))
            .word(("را", "rA"))
            .word(pick(rng, SEE))
            .finish(Register::Formal),
        // N-e N-e ADJ is
        2 => b
            .ezafe(pick(rng, NOUNS))
            .ezafe(pick(rng, NOUNS))
            .word(pick(rng, ADJECTIVES))
            .word(pick(rng, BE))
            .finish(Register::Formal),
        // this N is
        3 => b.word(("این", "in")).word(pick(rng, NOUNS)).word(pick(rng, BE)).finish(Register::Formal),
        // tiger-e ADJ in PLACE was
        4 => b
            .homograph("tiger", true)
            .word(pick(rng, ADJECTIVES))
            .word(("در", "dar"))
            .word(pick(rng, PLACES))
            .word(("بود", "bUd"))
            .finish(Register::Formal),
        // this N rA carry
        5 => b
            .word(("این", "in"))
            .word(pick(rng, NOUNS))
            .word(("را", "rA"))
            .homograph("carry", false)
            .finish(Register::Formal),
        // N rA with knife cut
        6 => b
            .word(pick(rng, CUTTABLE))
            .word(("را", "rA"))
            .word(("با", "bA"))
            .word(("چاقو", "čAğU"))
            .homograph("cut", false)
            .finish(Register::Formal),
        // man-e ADJ came / he yesterday died
        7 => {
            if rng.random_bool(0.5) {
                b.homograph("man", true).word(pick(rng, ADJECTIVES)).word(("آمد", "Amad")).finish(Register::Formal)
            } else {
                b.word(("او", "U")).word(("دیروز", "dirUz")).homograph("died", false).finish(Register::Formal)
            }
        }
        // flower-e ADJ in garden is / shoe-e N full of mud was
        8 => {
            if rng.random_bool(0.5) {
                b.homograph("flower", true)
                    .word(pick(rng, ADJECTIVES))
                    .word(("در", "dar"))
                    .word(("باغ", "bAğ"))
                    .word(("است", "ast"))
                    .finish(Register::Formal)
            } else {
                b.ezafe(("کفش", "kafš"))
                    .word(pick(rng, NOUNS))
                    .word(("پر", "por"))
                    .word(("از", "az"))
                    .homograph("mud", false)
                    .word(("بود", "bUd"))
                    .finish(Register::Formal)
            }
        }
        // informal: I there went
        9 => b
            .word(("من", "man"))
            .word(if rng.random_bool(0.5) { ("اونجا", "UnjA") } else { ("اینجا", "injA") })
            .word(("رفتم", "raftam"))
            .finish(Register::Informal),
        // informal: N-plural ADJ-copula
        10 => b
            .suffixed(pick(rng, NOUNS), "ا", "A")
            .suffixed(pick(rng, ADJ_CONSONANT), "ه", "e")
            .finish(Register::Informal),
        // informal: I N-e ADJ rA saw, with the short plural
        _ => b
            .word(("من", "man"))
            .ezafe(pick(rng, NOUNS))
            .suffixed(pick(rng, ADJ_CONSONANT), "ا", "A")
            .word(("رو", "ro"))
            .word(("دیدم", "didam"))
            .finish(Register::Informal),
    }
}

/// Generates `n` distinct sentences with ids `syn-0000`, `syn-0001`, ….
pub fn generate(n: usize, seed: u64) -> Vec<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        let mut entry = sentence(&mut rng);
        attempts += 1;
        // the template space is finite; allow repeats once it is exhausted
        if !seen.insert(entry.pg.clone()) && attempts < n * 50 {
            continue;
        }
        entry.id = format!("syn-{:04}", out.len());
        out.push(entry);
    }
    out
}

pub const TOY_SIZE: usize = 480;
pub const TOY_SEED: u64 = 7;
pub const TOY_HOLDOUT: usize = 40;

/// The toy corpus shipped as `data/toy_corpus.jsonl`: [`TOY_SIZE`] generated
/// sentences with [`TOY_HOLDOUT`] validation and [`TOY_HOLDOUT`] test entries.
pub fn toy_corpus() -> ParallelCorpus {
    let corpus = ParallelCorpus::new(generate(TOY_SIZE, TOY_SEED));
    split_corpus(&corpus, TOY_HOLDOUT, TOY_HOLDOUT, TOY_SEED).expect("toy corpus is large enough")
}

/// Text of the bundled toy corpus file.
pub const BUNDLED_TOY_CORPUS: &str = include_str!("../../data/toy_corpus.jsonl");

/// [`CorpusSource`] backed by [`generate`].
pub struct SyntheticSource {
    pub size: usize,
    pub seed: u64,
}

impl CorpusSource for SyntheticSource {
    fn load(&mut self) -> Result<ParallelCorpus, CorpusError> {
        Ok(ParallelCorpus::new(generate(self.size, self.seed)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::IntermediateAlphabet;

    #[test]
    fn generated_entries_satisfy_invariants() {
        let abc = IntermediateAlphabet::default_alphabet();
        let corpus = ParallelCorpus::new(generate(500, 11));
        corpus.check(&abc).unwrap();
        for e in &corpus.entries {
            assert_eq!(e.fa_words().len(), e.pg_words().len(), "{e:?}");
        }
        assert!(corpus.entries.iter().any(|e| e.register == Register::Informal));
        assert!(corpus.entries.iter().any(|e| !e.homographs.is_empty()));
    }

    #[test]
    fn bundled_toy_corpus_matches_generator() {
        let expected = toy_corpus();
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy_corpus.jsonl");
        if std::env::var_os("G2P_BRIDGE_REGENERATE").is_some() {
            let meta = crate::provenance::ArtifactMeta::new(&("synthetic", TOY_SIZE, TOY_HOLDOUT), Some(TOY_SEED));
            super::super::save_corpus(path, &expected, Some(&meta)).unwrap();
        }
        let abc = IntermediateAlphabet::default_alphabet();
        let bundled = super::super::parse_corpus(BUNDLED_TOY_CORPUS.as_bytes(), &abc).unwrap();
        assert_eq!(bundled, expected, "regenerate with G2P_BRIDGE_REGENERATE=1");
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(40, 5), generate(40, 5));
        assert_ne!(generate(40, 5), generate(40, 6));
    }
}
