//! Byte-level BPE tokenizer.
//!
//! Coverage is guaranteed by construction: every one of the 256 possible
//! bytes is a base unit, so no input can be out-of-vocabulary. Merges learned
//! by [`train_bpe`] glue frequent byte pairs into larger units, which splits
//! rare identifiers into common subwords instead of dropping them.
//!
//! Input is pre-tokenized on byte-class transitions (alphanumeric /
//! whitespace / other) and merges never cross those boundaries, so learned
//! units stay inside identifiers, inside whitespace runs, or inside operator
//! clusters.

mod io;
mod train;

pub use io::{parse_vocab, serialize_vocab};
pub use train::train_bpe;

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Number of single-byte base units.
pub const BASE_SIZE: usize = 256;
/// Sequence-start marker.
pub const BOS_ID: u32 = 256;
/// Sequence-end marker.
pub const EOS_ID: u32 = 257;
/// Padding marker.
pub const PAD_ID: u32 = 258;
/// Unknown marker. Never produced for raw bytes; reserved for non-byte
/// placeholders (e.g. unrecognised syntax-node kinds downstream).
pub const UNK_ID: u32 = 259;
/// Id of the unit produced by the first merge.
pub const FIRST_MERGE_ID: u32 = 260;

/// True for the four reserved marker ids.
pub const fn is_special(id: u32) -> bool {
    id >= BOS_ID && id <= UNK_ID
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct MergeApplication {
    /// Unit the pair rewrites to.
    id: u32,
    /// Position in training order; lower ranks apply first.
    rank: usize,
}

/// An ordered byte-pair-merge vocabulary.
///
/// Ids are laid out as: `[0, 256)` single bytes, `[256, 260)` special
/// markers, `[260, ..)` merge-produced units in training order. The layout is
/// stable: special ids do not depend on how many merges were trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    /// Unit bytes by id. Special ids hold empty placeholders.
    units: Vec<Vec<u8>>,
    /// Byte-backed units only (base bytes and merge products).
    token_table: HashMap<Vec<u8>, u32>,
    /// Ordered merge pairs; entry `k` references only units that exist
    /// before merge `k` is applied.
    merges: Vec<(u32, u32)>,
    merge_rank: HashMap<(u32, u32), MergeApplication>,
}

impl Vocabulary {
    /// Vocabulary with the 256 byte units and the special markers, no merges.
    pub fn base() -> Self {
        let mut units: Vec<Vec<u8>> = (0u16..256).map(|b| vec![b as u8]).collect();
        units.extend(std::iter::repeat_with(Vec::new).take(4));
        let token_table = (0u16..256).map(|b| (vec![b as u8], b as u32)).collect();
        Vocabulary {
            units,
            token_table,
            merges: Vec::new(),
            merge_rank: HashMap::new(),
        }
    }

    /// Total number of ids, specials included.
    pub fn vocab_size(&self) -> usize {
        self.units.len()
    }

    /// Merge pairs in training order, as unit ids.
    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Merge pairs in training order, as unit byte strings.
    pub fn merge_pairs(&self) -> impl Iterator<Item = (&[u8], &[u8])> {
        self.merges
            .iter()
            .map(|&(l, r)| (self.units[l as usize].as_slice(), self.units[r as usize].as_slice()))
    }

    /// Bytes for `id`; specials yield an empty slice, out-of-range yields
    /// `None`.
    pub fn unit_bytes(&self, id: u32) -> Option<&[u8]> {
        self.units.get(id as usize).map(Vec::as_slice)
    }

    /// Bytes for a byte-backed unit; `None` for specials and out-of-range.
    fn byte_unit(&self, id: u32) -> Option<&[u8]> {
        if is_special(id) {
            return None;
        }
        self.unit_bytes(id)
    }

    /// Id of the unit with exactly these bytes, if present.
    pub fn id_for_unit(&self, bytes: &[u8]) -> Option<u32> {
        self.token_table.get(bytes).copied()
    }

    pub(crate) fn has_merge(&self, left: u32, right: u32) -> bool {
        self.merge_rank.contains_key(&(left, right))
    }

    /// Appends a merge of two existing byte-backed units.
    ///
    /// If the concatenated bytes already name a unit, that id is reused;
    /// otherwise a fresh id is allocated, keeping ids dense.
    pub(crate) fn push_merge(&mut self, left: u32, right: u32) -> Result<u32> {
        let lb = self
            .byte_unit(left)
            .ok_or_else(|| Error::invalid_input(format!("merge references unit {left} which is not byte-backed")))?;
        let rb = self
            .byte_unit(right)
            .ok_or_else(|| Error::invalid_input(format!("merge references unit {right} which is not byte-backed")))?;
        let mut cat = Vec::with_capacity(lb.len() + rb.len());
        cat.extend_from_slice(lb);
        cat.extend_from_slice(rb);
        let id = match self.token_table.get(&cat) {
            Some(&id) => id,
            None => {
                let id = self.units.len() as u32;
                self.units.push(cat.clone());
                self.token_table.insert(cat, id);
                id
            }
        };
        let rank = self.merges.len();
        self.merges.push((left, right));
        self.merge_rank.insert((left, right), MergeApplication { id, rank });
        Ok(id)
    }

    /// Tokenizes `source`. No special markers are added; spans partition the
    /// input exactly.
    pub fn encode(&self, source: &[u8]) -> TokenSequence {
        let mut ids = Vec::new();
        let mut spans = Vec::new();
        for (offset, word) in pre_tokenize(source) {
            // (unit id, byte_start, byte_end) triples for this pre-token.
            let mut seq: Vec<(u32, usize, usize)> = word
                .iter()
                .enumerate()
                .map(|(i, &b)| (u32::from(b), offset + i, offset + i + 1))
                .collect();
            loop {
                // Applying the lowest-ranked applicable merge repeatedly
                // reproduces the training-order rewrite.
                let mut best: Option<(usize, u32, (u32, u32))> = None;
                for w in seq.windows(2) {
                    let key = (w[0].0, w[1].0);
                    if let Some(m) = self.merge_rank.get(&key) {
                        if best.is_none_or(|(rank, _, _)| m.rank < rank) {
                            best = Some((m.rank, m.id, key));
                        }
                    }
                }
                let Some((_, new_id, key)) = best else { break };
                // Left-to-right, non-overlapping.
                let mut next = Vec::with_capacity(seq.len());
                let mut i = 0;
                while i < seq.len() {
                    if i + 1 < seq.len() && (seq[i].0, seq[i + 1].0) == key {
                        next.push((new_id, seq[i].1, seq[i + 1].2));
                        i += 2;
                    } else {
                        next.push(seq[i]);
                        i += 1;
                    }
                }
                seq = next;
            }
            for (id, start, end) in seq {
                ids.push(id);
                spans.push((start, end));
            }
        }
        TokenSequence { ids, spans }
    }

    /// Concatenates the unit bytes of `tokens`. Special markers contribute
    /// nothing. Inverse of [`Vocabulary::encode`].
    pub fn decode(&self, tokens: &TokenSequence) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in &tokens.ids {
            let bytes = self
                .unit_bytes(id)
                .ok_or_else(|| Error::invalid_input(format!("decode: unknown token id {id}")))?;
            out.extend_from_slice(bytes);
        }
        Ok(out)
    }
}

/// A tokenized byte sequence.
///
/// `spans[i]` is the half-open byte range of `ids[i]` in the original
/// source. Non-special spans are non-overlapping and strictly increasing,
/// and their contents concatenate back to the input exactly. Special markers
/// carry the empty span `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub spans: Vec<(usize, usize)>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ByteClass {
    Alnum,
    Space,
    Other,
}

fn byte_class(b: u8) -> ByteClass {
    if b.is_ascii_alphanumeric() {
        ByteClass::Alnum
    } else if b.is_ascii_whitespace() {
        ByteClass::Space
    } else {
        // Includes all non-ASCII bytes, so multi-byte UTF-8 stays together.
        ByteClass::Other
    }
}

/// Splits `source` into maximal runs of a single byte class, with the byte
/// offset of each run. Merges never cross run boundaries.
pub(crate) fn pre_tokenize(source: &[u8]) -> Vec<(usize, &[u8])> {
    let mut words = Vec::new();
    let mut start = 0;
    for i in 1..source.len() {
        if byte_class(source[i]) != byte_class(source[i - 1]) {
            words.push((start, &source[start..i]));
            start = i;
        }
    }
    if start < source.len() {
        words.push((start, &source[start..]));
    }
    words
}
