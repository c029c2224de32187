//! Text serialization for trained vocabularies.
//!
//! Line 1 is a header naming the base size and the special ids; every
//! following line is one merge, written as the two operand units separated
//! by a single space. Unit bytes are written raw when they are ASCII graphic
//! characters other than `\`, and as `\xHH` (lowercase hex) otherwise — in
//! particular space is always escaped, so the separator is unambiguous.
//!
//! The format is strict: serialize ∘ parse is the identity on files this
//! module wrote, and parse rejects anything structurally off (bad header,
//! unknown operand units, duplicate merges, missing trailing newline) with a
//! line-numbered error.

use std::fmt::Write as _;

use super::{Vocabulary, BASE_SIZE, BOS_ID, EOS_ID, PAD_ID, UNK_ID};
use crate::error::{Error, Result};

fn header() -> String {
    format!("bpe-vocab v1 base={BASE_SIZE} bos={BOS_ID} eos={EOS_ID} pad={PAD_ID} unk={UNK_ID}")
}

/// Renders `vocab` in the vocabulary file format.
pub fn serialize_vocab(vocab: &Vocabulary) -> String {
    let mut out = header();
    out.push('\n');
    for (left, right) in vocab.merge_pairs() {
        write_unit(&mut out, left);
        out.push(' ');
        write_unit(&mut out, right);
        out.push('\n');
    }
    out
}

fn write_unit(out: &mut String, bytes: &[u8]) {
    for &b in bytes {
        if b.is_ascii_graphic() && b != b'\\' {
            out.push(b as char);
        } else {
            write!(out, "\\x{b:02x}").expect("writing to String cannot fail");
        }
    }
}

/// Parses a vocabulary file, validating it merge by merge.
pub fn parse_vocab(text: &str) -> Result<Vocabulary> {
    let parse_err = |line: usize, msg: &str| Error::Parse {
        line,
        msg: msg.to_string(),
    };
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| parse_err(0, "vocabulary file must end with a newline"))?;
    let mut lines = body.split('\n').enumerate();

    let (_, first) = lines.next().expect("split yields at least one element");
    if first != header() {
        return Err(parse_err(1, "unsupported vocabulary header"));
    }

    let mut vocab = Vocabulary::base();
    for (i, line) in lines {
        let lineno = i + 1;
        let (left, right) = line
            .split_once(' ')
            .ok_or_else(|| parse_err(lineno, "merge line must hold two space-separated units"))?;
        let left = unescape(left, lineno)?;
        let right = unescape(right, lineno)?;
        let left_id = vocab
            .id_for_unit(&left)
            .ok_or_else(|| parse_err(lineno, "merge references a unit no earlier merge produced"))?;
        let right_id = vocab
            .id_for_unit(&right)
            .ok_or_else(|| parse_err(lineno, "merge references a unit no earlier merge produced"))?;
        if vocab.has_merge(left_id, right_id) {
            return Err(parse_err(lineno, "duplicate merge pair"));
        }
        vocab.push_merge(left_id, right_id)?;
    }
    Ok(vocab)
}

fn unescape(unit: &str, lineno: usize) -> Result<Vec<u8>> {
    let err = |msg: &str| Error::Parse {
        line: lineno,
        msg: msg.to_string(),
    };
    let mut out = Vec::new();
    let mut chars = unit.as_bytes().iter().copied();
    while let Some(b) = chars.next() {
        if b == b'\\' {
            if chars.next() != Some(b'x') {
                return Err(err("escape must be \\xHH"));
            }
            let hi = chars.next().ok_or_else(|| err("truncated \\xHH escape"))?;
            let lo = chars.next().ok_or_else(|| err("truncated \\xHH escape"))?;
            let hex = |d: u8| (d as char).to_digit(16);
            let (hi, lo) = hex(hi)
                .zip(hex(lo))
                .ok_or_else(|| err("invalid hex digit in \\xHH escape"))?;
            out.push((hi * 16 + lo) as u8);
        } else if b.is_ascii_graphic() {
            out.push(b);
        } else {
            return Err(err("unit bytes outside ASCII graphic must be \\xHH-escaped"));
        }
    }
    if out.is_empty() {
        return Err(err("empty unit"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::train_bpe;

    #[test]
    fn round_trip_is_byte_exact() {
        let corpus = [
            "int main() { return x_y + 12; }",
            "fn main() { let x_y = \"a\\tb\"; }",
            "é ünïcode\n\ttabs and\r\nnewlines",
        ];
        let vocab = train_bpe(&corpus, 40).unwrap();
        let text = serialize_vocab(&vocab);
        let reparsed = parse_vocab(&text).unwrap();
        assert_eq!(reparsed, vocab);
        assert_eq!(serialize_vocab(&reparsed), text);
    }

    #[test]
    fn escapes_space_backslash_and_non_ascii() {
        let mut vocab = Vocabulary::base();
        vocab.push_merge(u32::from(b' '), u32::from(b' ')).unwrap();
        vocab.push_merge(u32::from(b'\\'), u32::from(b'n')).unwrap();
        vocab.push_merge(0xC3, 0xA9).unwrap();
        let text = serialize_vocab(&vocab);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], r"\x20 \x20");
        assert_eq!(lines[2], r"\x5c n");
        assert_eq!(lines[3], r"\xc3 \xa9");
        assert_eq!(parse_vocab(&text).unwrap(), vocab);
    }

    #[test]
    fn rejects_bad_header() {
        assert!(parse_vocab("bpe-vocab v2 base=256\n").is_err());
        assert!(parse_vocab("\n").is_err());
    }

    #[test]
    fn rejects_missing_trailing_newline() {
        let vocab = train_bpe(&["abab"], 1).unwrap();
        let mut text = serialize_vocab(&vocab);
        text.pop();
        assert!(parse_vocab(&text).is_err());
    }

    #[test]
    fn rejects_merge_of_unknown_unit() {
        // "ab cd" without earlier merges producing "ab" or "cd".
        let text = format!("{}\nab cd\n", super::header());
        assert!(parse_vocab(&text).is_err());
    }

    #[test]
    fn rejects_duplicate_merge() {
        let text = format!("{}\na b\na b\n", super::header());
        assert!(parse_vocab(&text).is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        let h = super::header();
        for bad in [
            "a",          // one unit
            "a b c",      // raw space inside second unit
            " a",         // empty left unit
            "a \\x2",     // truncated escape
            "a \\q20",    // wrong escape introducer
            "a \\xzz",    // bad hex
            "a\tb",       // raw control byte
            "",           // empty line
        ] {
            let text = format!("{h}\n{bad}\n");
            assert!(parse_vocab(&text).is_err(), "accepted malformed line {bad:?}");
        }
    }

    #[test]
    fn accepts_uppercase_hex_but_writes_lowercase() {
        let text = format!("{}\n\\xC3 \\xA9\n", super::header());
        let vocab = parse_vocab(&text).unwrap();
        assert!(serialize_vocab(&vocab).contains("\\xc3 \\xa9"));
    }
}
