use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{split_words, CorpusEntry, CorpusError, HomographOccurrence, ParallelCorpus, Register, Split};

/// Labels `val_n` + `test_n` entries by a seeded shuffle; the rest is train.
pub fn split_corpus(
    corpus: &ParallelCorpus,
    val_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<ParallelCorpus, CorpusError> {
    let requested = val_n + test_n;
    if requested >= corpus.len() {
        return Err(CorpusError::InsufficientData { requested, available: corpus.len() });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = BTreeMap::new();
    for (rank, &idx) in order.iter().enumerate() {
        let split = if rank < val_n {
            Split::Val
        } else if rank < requested {
            Split::Test
        } else {
            Split::Train
        };
        labels.insert(corpus.entries[idx].id.clone(), split);
    }
    Ok(ParallelCorpus { entries: corpus.entries.clone(), split_labels: labels })
}

/// Concatenates two same-register entries, shifting `b`'s annotations.
pub fn merge_entries(a: &CorpusEntry, b: &CorpusEntry) -> Result<CorpusEntry, CorpusError> {
    if a.register != b.register {
        return Err(CorpusError::RegisterMismatch {
            a: a.id.clone(),
            a_register: a.register,
            b: b.id.clone(),
            b_register: b.register,
        });
    }
    let shift = a.word_count();
    let mut ezafe = a.ezafe.clone();
    ezafe.extend(b.ezafe.iter().map(|i| i + shift));
    let mut homographs = a.homographs.clone();
    homographs
        .extend(b.homographs.iter().map(|h| HomographOccurrence { word_index: h.word_index + shift, ..h.clone() }));
    Ok(CorpusEntry {
        id: format!("{}+{}", a.id, b.id),
        fa: format!("{} {}", a.fa, b.fa),
        pg: format!("{} {}", a.pg, b.pg),
        ezafe,
        homographs,
        register: a.register,
    })
}

/// Word lists of an entry when both sides are single-space separated and
/// aligned one-to-one; only such entries can be cut.
fn aligned_words(entry: &CorpusEntry) -> Option<(Vec<&str>, Vec<&str>)> {
    let fa = split_words(&entry.fa);
    let pg = split_words(&entry.pg);
    (fa.len() == pg.len() && fa.join(" ") == entry.fa && pg.join(" ") == entry.pg).then_some((fa, pg))
}

fn fragment(entry: &CorpusEntry, fa: &[&str], pg: &[&str], range: std::ops::Range<usize>, id: String) -> CorpusEntry {
    let start = range.start;
    CorpusEntry {
        id,
        fa: fa[range.clone()].join(" "),
        pg: pg[range.clone()].join(" "),
        ezafe: entry.ezafe.iter().filter(|i| range.contains(i)).map(|i| i - start).collect(),
        homographs: entry
            .homographs
            .iter()
            .filter(|h| range.contains(&h.word_index))
            .map(|h| HomographOccurrence { word_index: h.word_index - start, ..h.clone() })
            .collect(),
        register: entry.register,
    }
}

/// Cuts an entry into its first `first_len` words and the rest.
///
/// Returns `None` when the cut is out of range, would leave an Ezafe word
/// at the end of the first half, or the entry's words are not aligned.
pub fn split_entry_at(entry: &CorpusEntry, first_len: usize) -> Option<(CorpusEntry, CorpusEntry)> {
    let (fa, pg) = aligned_words(entry)?;
    if first_len == 0 || first_len >= pg.len() || entry.ezafe.contains(&(first_len - 1)) {
        return None;
    }
    Some((
        fragment(entry, &fa, &pg, 0..first_len, format!("{}#0", entry.id)),
        fragment(entry, &fa, &pg, first_len..pg.len(), format!("{}#1", entry.id)),
    ))
}

/// Cut points (index of the last word of each non-final fragment).
///
/// A fragment takes `max_words` words; if that would end on an Ezafe
/// word, it grows to the next legal boundary instead.
fn greedy_cuts(word_count: usize, ezafe: &std::collections::BTreeSet<usize>, max_words: usize) -> Vec<usize> {
    let max_words = max_words.max(1);
    let legal = |p: usize| p + 1 < word_count && !ezafe.contains(&p);
    let mut cuts = Vec::new();
    let mut start = 0;
    while word_count - start > max_words {
        match (start + max_words - 1..word_count).find(|&p| legal(p)) {
            Some(p) => {
                cuts.push(p);
                start = p + 1;
            }
            None => break,
        }
    }
    cuts
}

/// Splits an entry at word boundaries that do not follow an Ezafe word.
///
/// Joining the fragments with single spaces gives back `fa` and `pg`. If no
/// legal cut exists (or the entry is not word-aligned) the entry comes back
/// unchanged as the only element.
pub fn split_at_non_ezafe(entry: &CorpusEntry, max_words: usize) -> Vec<CorpusEntry> {
    let Some((fa, pg)) = aligned_words(entry) else {
        return vec![entry.clone()];
    };
    let cuts = greedy_cuts(pg.len(), &entry.ezafe, max_words);
    if cuts.is_empty() {
        return vec![entry.clone()];
    }
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for (k, end) in cuts.iter().map(|c| c + 1).chain(std::iter::once(pg.len())).enumerate() {
        out.push(fragment(entry, &fa, &pg, start..end, format!("{}#{k}", entry.id)));
        start = end;
    }
    out
}

/// Knobs for [`augment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub target_size: usize,
    pub seed: u64,
    /// Longest fragment the splitter aims for.
    pub max_words: usize,
    /// Merges producing more words than this are rejected.
    pub max_merge_words: usize,
    pub merge_probability: f64,
    /// Consecutive failed attempts before giving up.
    pub patience: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { target_size: 0, seed: 0, max_words: 8, max_merge_words: 16, merge_probability: 0.5, patience: 10_000 }
    }
}

/// Grows the training split to `target_size` entries by randomly merging
/// same-register pairs and splitting long entries at non-Ezafe boundaries.
///
/// Original entries are kept; validation and test entries are untouched.
/// An unlabeled corpus is treated as all-train.
pub fn augment(corpus: &ParallelCorpus, config: &AugmentConfig) -> Result<ParallelCorpus, CorpusError> {
    let labeled = corpus.is_labeled();
    let is_train = |e: &CorpusEntry| !labeled || corpus.split_of(&e.id) == Some(Split::Train);
    let mut pool: Vec<CorpusEntry> = corpus.entries.iter().filter(|e| is_train(e)).cloned().collect();
    let target = config.target_size;
    if target < pool.len() {
        return Err(CorpusError::TargetBelowCurrent { target, current: pool.len() });
    }
    let initial = pool.len();
    if pool.is_empty() && target > 0 {
        return Err(CorpusError::TargetUnreachable { reached: 0, target });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ids: HashSet<String> = corpus.entries.iter().map(|e| e.id.clone()).collect();
    let mut by_register: BTreeMap<Register, Vec<usize>> = BTreeMap::new();
    let mut splittable = Vec::new();
    let mut lengths = Vec::new();
    let track = |pool: &[CorpusEntry],
                 idx: usize,
                 by_register: &mut BTreeMap<Register, Vec<usize>>,
                 splittable: &mut Vec<usize>,
                 lengths: &mut Vec<usize>| {
        let entry = &pool[idx];
        let words = entry.word_count();
        by_register.entry(entry.register).or_default().push(idx);
        lengths.push(words);
        if !greedy_cuts(words, &entry.ezafe, config.max_words).is_empty() && aligned_words(entry).is_some() {
            splittable.push(idx);
        }
    };
    for idx in 0..pool.len() {
        track(&pool, idx, &mut by_register, &mut splittable, &mut lengths);
    }

    let mut failures = 0usize;
    while pool.len() < target {
        let want_merge = splittable.is_empty() || rng.random_bool(config.merge_probability);
        let mut added = Vec::new();
        if want_merge {
            let a = rng.random_range(0..pool.len());
            let same = &by_register[&pool[a].register];
            let b = same[rng.random_range(0..same.len())];
            if lengths[a] + lengths[b] <= config.max_merge_words {
                let merged = merge_entries(&pool[a], &pool[b])?;
                if !ids.contains(&merged.id) {
                    added.push(merged);
                }
            }
        } else {
            let slot = rng.random_range(0..splittable.len());
            let idx = splittable.swap_remove(slot);
            for piece in split_at_non_ezafe(&pool[idx], config.max_words) {
                if pool.len() + added.len() >= target {
                    break;
                }
                if !ids.contains(&piece.id) {
                    added.push(piece);
                }
            }
        }

        if added.is_empty() {
            failures += 1;
            if failures > config.patience {
                return Err(CorpusError::TargetUnreachable { reached: pool.len(), target });
            }
            continue;
        }
        failures = 0;
        for entry in added {
            ids.insert(entry.id.clone());
            pool.push(entry);
            track(&pool, pool.len() - 1, &mut by_register, &mut splittable, &mut lengths);
        }
    }

    let mut out = corpus.clone();
    for entry in pool.into_iter().skip(initial) {
        if labeled {
            out.split_labels.insert(entry.id.clone(), Split::Train);
        }
        out.entries.push(entry);
    }
    Ok(out)
}
