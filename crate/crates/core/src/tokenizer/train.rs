//! Greedy byte-pair-merge training.
//!
//! Each round merges the most frequent adjacent unit pair across the
//! pre-tokenized corpus, counting every adjacent index pair (so `"aaa"`
//! contributes two `(a, a)` occurrences). Ties break toward the
//! lexicographically smallest `(left-bytes, right-bytes)` pair, making the
//! result independent of hash-map iteration order.

use std::collections::{HashMap, HashSet};

use super::{pre_tokenize, Vocabulary};
use crate::error::{Error, Result};

#[derive(Default)]
struct PairStat {
    count: u64,
    /// Indices of distinct words currently containing the pair.
    words: HashSet<usize>,
}

/// Trains a vocabulary with at most `num_merges` merges.
///
/// Training stops early once no adjacent pair remains (every word collapsed
/// to a single unit), so the result carries `min(num_merges, attainable)`
/// merges. The corpus must be non-empty.
pub fn train_bpe<S: AsRef<[u8]>>(corpus: &[S], num_merges: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::invalid_input("train_bpe: empty corpus"));
    }
    let mut vocab = Vocabulary::base();

    // Distinct pre-tokens with occurrence counts; merging operates on these.
    let mut word_counts: HashMap<&[u8], u64> = HashMap::new();
    for doc in corpus {
        for (_, word) in pre_tokenize(doc.as_ref()) {
            *word_counts.entry(word).or_insert(0) += 1;
        }
    }
    let mut words: Vec<(Vec<u32>, u64)> = word_counts
        .into_iter()
        .map(|(w, c)| (w.iter().map(|&b| u32::from(b)).collect(), c))
        .collect();

    let mut stats: HashMap<(u32, u32), PairStat> = HashMap::new();
    for (wi, (seq, count)) in words.iter().enumerate() {
        for w in seq.windows(2) {
            let stat = stats.entry((w[0], w[1])).or_default();
            stat.count += count;
            stat.words.insert(wi);
        }
    }

    for _ in 0..num_merges {
        let Some(pair) = select_pair(&stats, &vocab) else {
            break; // nothing left to merge
        };
        let new_id = vocab.push_merge(pair.0, pair.1)?;

        let mut affected: Vec<usize> = stats[&pair].words.iter().copied().collect();
        affected.sort_unstable(); // order is irrelevant to the counts; keep scans cache-friendly
        for wi in affected {
            let (seq, count) = &mut words[wi];
            let count = *count;
            let old_keys = retract_word(&mut stats, seq, count);
            apply_merge(seq, pair, new_id);
            let new_keys = restore_word(&mut stats, seq, count, wi);
            for key in old_keys.difference(&new_keys) {
                if let Some(stat) = stats.get_mut(key) {
                    stat.words.remove(&wi);
                }
            }
        }
        debug_assert!(!stats.contains_key(&pair));
    }
    Ok(vocab)
}

/// Most frequent pair; ties go to the lexicographically smallest
/// `(left-bytes, right-bytes)`.
fn select_pair(stats: &HashMap<(u32, u32), PairStat>, vocab: &Vocabulary) -> Option<(u32, u32)> {
    let bytes_of = |pair: (u32, u32)| {
        (
            vocab.unit_bytes(pair.0).expect("pair unit exists"),
            vocab.unit_bytes(pair.1).expect("pair unit exists"),
        )
    };
    let mut best: Option<((u32, u32), u64)> = None;
    for (&pair, stat) in stats {
        debug_assert!(stat.count > 0, "zero-count pairs must be dropped");
        let better = match best {
            None => true,
            Some((best_pair, best_count)) => {
                stat.count > best_count
                    || (stat.count == best_count && bytes_of(pair) < bytes_of(best_pair))
            }
        };
        if better {
            best = Some((pair, stat.count));
        }
    }
    best.map(|(pair, _)| pair)
}

/// Removes one word's pair contributions, dropping entries that hit zero.
/// Returns the set of pair keys the word contained.
fn retract_word(
    stats: &mut HashMap<(u32, u32), PairStat>,
    seq: &[u32],
    count: u64,
) -> HashSet<(u32, u32)> {
    let mut keys = HashSet::new();
    for w in seq.windows(2) {
        let key = (w[0], w[1]);
        keys.insert(key);
        let stat = stats.get_mut(&key).expect("retracting an uncounted pair");
        stat.count -= count;
        if stat.count == 0 {
            stats.remove(&key);
        }
    }
    keys
}

/// Adds one word's pair contributions. Returns the set of pair keys added.
fn restore_word(
    stats: &mut HashMap<(u32, u32), PairStat>,
    seq: &[u32],
    count: u64,
    wi: usize,
) -> HashSet<(u32, u32)> {
    let mut keys = HashSet::new();
    for w in seq.windows(2) {
        let key = (w[0], w[1]);
        keys.insert(key);
        let stat = stats.entry(key).or_default();
        stat.count += count;
        stat.words.insert(wi);
    }
    keys
}

/// Rewrites every left-to-right non-overlapping occurrence of `pair`.
fn apply_merge(seq: &mut Vec<u32>, pair: (u32, u32), new_id: u32) {
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && seq[i] == pair.0 && seq[i + 1] == pair.1 {
            out.push(new_id);
            i += 2;
        } else {
            out.push(seq[i]);
            i += 1;
        }
    }
    *seq = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::BASE_SIZE;

    fn merge_bytes(vocab: &Vocabulary) -> Vec<(Vec<u8>, Vec<u8>)> {
        vocab
            .merge_pairs()
            .map(|(l, r)| (l.to_vec(), r.to_vec()))
            .collect()
    }

    #[test]
    fn most_frequent_pair_wins() {
        let vocab = train_bpe(&[b"aaab".as_slice(), b"aaab"], 1).unwrap();
        assert_eq!(merge_bytes(&vocab), vec![(b"a".to_vec(), b"a".to_vec())]);
    }

    #[test]
    fn zero_merges_requested() {
        let vocab = train_bpe(&[b"xy".as_slice()], 0).unwrap();
        assert!(vocab.merges().is_empty());
        assert_eq!(vocab.vocab_size(), BASE_SIZE + 4);
    }

    #[test]
    fn second_merge_sees_first_merge_units() {
        let vocab = train_bpe(&[b"abab".as_slice()], 2).unwrap();
        assert_eq!(
            merge_bytes(&vocab),
            vec![
                (b"a".to_vec(), b"b".to_vec()),
                (b"ab".to_vec(), b"ab".to_vec()),
            ]
        );
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let corpus: [&[u8]; 0] = [];
        assert!(train_bpe(&corpus, 4).is_err());
    }

    #[test]
    fn training_stops_when_no_pairs_remain() {
        let vocab = train_bpe(&[b"ab".as_slice()], 10).unwrap();
        // One merge collapses the only word to a single unit.
        assert_eq!(merge_bytes(&vocab), vec![(b"a".to_vec(), b"b".to_vec())]);
    }

    #[test]
    fn ties_break_to_lexicographically_smallest_pair() {
        // (b, a) and (a, b) both occur once; (a, b) sorts first.
        let vocab = train_bpe(&[b"ba".as_slice(), b"ab"], 1).unwrap();
        assert_eq!(merge_bytes(&vocab), vec![(b"a".to_vec(), b"b".to_vec())]);
    }

    #[test]
    fn overlapping_occurrences_all_count() {
        // "aaa" holds two (a, a) index pairs. Counting only non-overlapping
        // occurrences would give (a, a) = 1 = (A, B) and the tie-break would
        // pick (A, B); with overlap counting (a, a) = 2 wins outright.
        let vocab = train_bpe(&[b"aaa".as_slice(), b"AB"], 1).unwrap();
        assert_eq!(merge_bytes(&vocab), vec![(b"a".to_vec(), b"a".to_vec())]);
    }

    #[test]
    fn pre_tokenization_confines_merges() {
        // "a b" repeated: the space blocks (a, b); only single-unit words
        // and the space remain, so the only mergeable pairs sit inside
        // multi-byte words.
        let vocab = train_bpe(&[b"a b".as_slice(), b"a b", b"cd"], 1).unwrap();
        assert_eq!(merge_bytes(&vocab), vec![(b"c".to_vec(), b"d".to_vec())]);
    }
}
