//! Byte-level unified diffs: parsing, application, and inversion.
//!
//! Patches are treated as opaque bytes throughout — source files in the
//! wild are not reliably UTF-8 — and application is exact: every context
//! and removal line must match the pre-image byte for byte, or the file is
//! reported unreconstructable rather than patched approximately.

use crate::error::{Error, Result};

/// One line of a hunk body. Bytes include the trailing newline except for a
/// final line flagged by `\ No newline at end of file`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiffLine {
    Context(Vec<u8>),
    Remove(Vec<u8>),
    Add(Vec<u8>),
}

/// One `@@ -a,b +c,d @@` block. Starts are 1-based line numbers; a length
/// of zero marks a pure insertion/deletion anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    pub lines: Vec<DiffLine>,
}

/// All hunks touching one file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileDiff {
    /// Path on the pre side, `a/` prefix stripped; "/dev/null" for created
    /// files.
    pub old_path: String,
    /// Path on the post side, `b/` prefix stripped; "/dev/null" for deleted
    /// files.
    pub new_path: String,
    pub hunks: Vec<Hunk>,
}

impl FileDiff {
    /// The path naming this file's content on disk: the post-side path for
    /// anything that still exists, else the pre-side path.
    pub fn effective_path(&self) -> &str {
        if self.new_path == "/dev/null" {
            &self.old_path
        } else {
            &self.new_path
        }
    }
}

/// A parsed fix patch: every per-file diff of one commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchSet {
    pub commit_id: String,
    pub files: Vec<FileDiff>,
}

fn strip_git_prefix(path: &str) -> String {
    if path == "/dev/null" {
        return path.to_string();
    }
    path.strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path)
        .to_string()
}

/// Splits into lines that keep their `\n`; a final unterminated line is
/// kept as-is. The inverse of concatenation.
pub fn split_lines(bytes: &[u8]) -> Vec<&[u8]> {
    bytes.split_inclusive(|&b| b == b'\n').collect()
}

/// Parses `@@ -a[,b] +c[,d] @@`; omitted lengths default to 1.
fn parse_hunk_header(line: &str, line_no: usize) -> Result<(usize, usize, usize, usize)> {
    let err = |msg: &str| Error::Parse {
        line: line_no,
        msg: format!("{msg}: {line}"),
    };
    let rest = line
        .strip_prefix("@@ -")
        .ok_or_else(|| err("malformed hunk header"))?;
    let (ranges, _) = rest
        .split_once(" @@")
        .ok_or_else(|| err("hunk header lacks closing @@"))?;
    let (old, new) = ranges
        .split_once(" +")
        .ok_or_else(|| err("hunk header lacks new range"))?;
    let parse_range = |s: &str| -> Result<(usize, usize)> {
        let (start, len) = match s.split_once(',') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let start = start
            .parse::<usize>()
            .map_err(|_| err("non-numeric line number"))?;
        let len = match len {
            Some(l) => l.parse::<usize>().map_err(|_| err("non-numeric length"))?,
            None => 1,
        };
        Ok((start, len))
    };
    let (old_start, old_len) = parse_range(old)?;
    let (new_start, new_len) = parse_range(new)?;
    Ok((old_start, old_len, new_start, new_len))
}

/// Parses a unified diff (optionally with git's extended headers, which are
/// skipped) into per-file hunk lists.
///
/// Validated per hunk: body line counts must match the header's declared
/// old/new lengths. Errors carry the 1-based line number of the offence.
pub fn parse_unified_diff(patch: &[u8], commit_id: &str) -> Result<PatchSet> {
    let lines: Vec<&[u8]> = patch.split(|&b| b == b'\n').collect();
    let mut files: Vec<FileDiff> = Vec::new();
    let mut current: Option<FileDiff> = None;
    let mut pending_old: Option<String> = None;

    let mut i = 0usize;
    while i < lines.len() {
        let raw = lines[i];
        let line_no = i + 1;
        // Headers are ASCII; hunk bodies may not be. Only header-shaped
        // lines need string handling.
        let text = std::str::from_utf8(raw).ok();
        if let Some(text) = text.and_then(|t| t.strip_prefix("--- ")) {
            pending_old = Some(strip_git_prefix(text.trim_end_matches('\r')));
            i += 1;
            continue;
        }
        if let Some(text) = text.and_then(|t| t.strip_prefix("+++ ")) {
            let old_path = pending_old.take().ok_or(Error::Parse {
                line: line_no,
                msg: "new-file header without preceding old-file header".into(),
            })?;
            if let Some(f) = current.take() {
                files.push(f);
            }
            current = Some(FileDiff {
                old_path,
                new_path: strip_git_prefix(text.trim_end_matches('\r')),
                hunks: Vec::new(),
            });
            i += 1;
            continue;
        }
        if text.is_some_and(|t| t.starts_with("@@ -")) {
            let header = text.expect("checked above");
            let (old_start, old_len, new_start, new_len) =
                parse_hunk_header(header, line_no)?;
            let file = current.as_mut().ok_or(Error::Parse {
                line: line_no,
                msg: "hunk before any file header".into(),
            })?;
            let mut hunk = Hunk {
                old_start,
                old_len,
                new_start,
                new_len,
                lines: Vec::new(),
            };
            let (mut seen_old, mut seen_new) = (0usize, 0usize);
            i += 1;
            while seen_old < old_len || seen_new < new_len {
                let body = *lines.get(i).ok_or(Error::Parse {
                    line: lines.len(),
                    msg: format!(
                        "hunk truncated: saw {seen_old}/{old_len} old and {seen_new}/{new_len} new lines"
                    ),
                })?;
                i += 1;
                let (marker, content) = match body.split_first() {
                    Some((&m, rest)) => (m, rest),
                    // A blank line inside a hunk is an empty context line
                    // (some tools trim the lone space marker).
                    None => (b' ', &[][..]),
                };
                // Re-attach the newline the outer split consumed.
                let mut content = content.to_vec();
                content.push(b'\n');
                match marker {
                    b' ' => {
                        seen_old += 1;
                        seen_new += 1;
                        hunk.lines.push(DiffLine::Context(content));
                    }
                    b'-' => {
                        seen_old += 1;
                        hunk.lines.push(DiffLine::Remove(content));
                    }
                    b'+' => {
                        seen_new += 1;
                        hunk.lines.push(DiffLine::Add(content));
                    }
                    b'\\' => {
                        // "\ No newline at end of file" — the previous line
                        // lacks its terminator.
                        match hunk.lines.last_mut() {
                            Some(
                                DiffLine::Context(prev)
                                | DiffLine::Remove(prev)
                                | DiffLine::Add(prev),
                            ) if prev.last() == Some(&b'\n') => {
                                prev.pop();
                            }
                            _ => {
                                return Err(Error::Parse {
                                    line: i,
                                    msg: "no-newline marker without a preceding line".into(),
                                })
                            }
                        }
                    }
                    other => {
                        return Err(Error::Parse {
                            line: i,
                            msg: format!("unknown hunk line marker {:?}", other as char),
                        })
                    }
                }
            }
            // A trailing no-newline marker can follow a complete hunk body.
            if lines.get(i).is_some_and(|l| l.first() == Some(&b'\\')) {
                if let Some(
                    DiffLine::Context(prev) | DiffLine::Remove(prev) | DiffLine::Add(prev),
                ) = hunk.lines.last_mut()
                {
                    if prev.last() == Some(&b'\n') {
                        prev.pop();
                    }
                }
                i += 1;
            }
            file.hunks.push(hunk);
            continue;
        }
        // Anything else (git headers, index lines, commit message, the
        // final empty split fragment) is carried context, not diff content.
        i += 1;
    }
    if let Some(f) = current.take() {
        files.push(f);
    }
    Ok(PatchSet {
        commit_id: commit_id.to_string(),
        files,
    })
}

/// Applies `diff` to the pre-image, producing the post-image. Hunks must be
/// in ascending order and every context/removal line must match exactly.
pub fn apply(pre: &[u8], diff: &FileDiff) -> Result<Vec<u8>> {
    let pre_lines = split_lines(pre);
    let mut out: Vec<u8> = Vec::with_capacity(pre.len());
    let mut cursor = 0usize; // next unconsumed pre line
    for (hunk_idx, hunk) in diff.hunks.iter().enumerate() {
        let fail = |msg: String| {
            Error::Unreconstructable(format!(
                "{}: hunk {} (-{},{}): {msg}",
                diff.old_path,
                hunk_idx + 1,
                hunk.old_start,
                hunk.old_len
            ))
        };
        // For an insertion (old_len = 0) the start names the line AFTER
        // which to insert; otherwise the first affected line.
        let start = if hunk.old_len == 0 {
            hunk.old_start
        } else {
            hunk.old_start - 1
        };
        if start < cursor {
            return Err(fail("overlaps the previous hunk".into()));
        }
        if start > pre_lines.len() {
            return Err(fail(format!(
                "starts past the file's {} lines",
                pre_lines.len()
            )));
        }
        for line in &pre_lines[cursor..start] {
            out.extend_from_slice(line);
        }
        cursor = start;
        for line in &hunk.lines {
            match line {
                DiffLine::Context(expected) | DiffLine::Remove(expected) => {
                    let actual = pre_lines.get(cursor).copied().ok_or_else(|| {
                        fail("runs past the end of the file".into())
                    })?;
                    if actual != expected.as_slice() {
                        return Err(fail(format!(
                            "line {} does not match the patch (expected {:?}, found {:?})",
                            cursor + 1,
                            String::from_utf8_lossy(expected),
                            String::from_utf8_lossy(actual),
                        )));
                    }
                    if matches!(line, DiffLine::Context(_)) {
                        out.extend_from_slice(actual);
                    }
                    cursor += 1;
                }
                DiffLine::Add(added) => {
                    out.extend_from_slice(added);
                }
            }
        }
    }
    for line in &pre_lines[cursor..] {
        out.extend_from_slice(line);
    }
    Ok(out)
}

/// Swaps the diff's direction: applying the inverse to the post-image
/// recovers the pre-image byte-exactly.
pub fn invert(diff: &FileDiff) -> FileDiff {
    FileDiff {
        old_path: diff.new_path.clone(),
        new_path: diff.old_path.clone(),
        hunks: diff
            .hunks
            .iter()
            .map(|h| Hunk {
                old_start: h.new_start,
                old_len: h.new_len,
                new_start: h.old_start,
                new_len: h.old_len,
                lines: h
                    .lines
                    .iter()
                    .map(|l| match l {
                        DiffLine::Context(b) => DiffLine::Context(b.clone()),
                        DiffLine::Remove(b) => DiffLine::Add(b.clone()),
                        DiffLine::Add(b) => DiffLine::Remove(b.clone()),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// The hunk's pre-side extent in bytes: the byte range covering old lines
/// `old_start ..= old_start+old_len-1` (context included). Zero-length
/// hunks collapse to their insertion point `(p, p)`.
pub fn hunk_byte_range(pre: &[u8], hunk: &Hunk) -> (usize, usize) {
    let lines = split_lines(pre);
    let mut offsets = Vec::with_capacity(lines.len() + 1);
    let mut pos = 0usize;
    offsets.push(0);
    for line in &lines {
        pos += line.len();
        offsets.push(pos);
    }
    let at = |line_idx: usize| offsets[line_idx.min(offsets.len() - 1)];
    if hunk.old_len == 0 {
        let p = at(hunk.old_start);
        (p, p)
    } else {
        (at(hunk.old_start - 1), at(hunk.old_start - 1 + hunk.old_len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRE: &[u8] = b"alpha\nbeta\ngamma\ndelta\n";

    fn one_file_patch(body: &str) -> FileDiff {
        let patch = parse_unified_diff(body.as_bytes(), "c0ffee").unwrap();
        assert_eq!(patch.files.len(), 1);
        patch.files.into_iter().next().unwrap()
    }

    #[test]
    fn parses_and_applies_single_line_change() {
        let diff = one_file_patch(
            "--- a/x.c\n+++ b/x.c\n@@ -2,1 +2,1 @@\n-beta\n+BETA\n",
        );
        assert_eq!(diff.old_path, "x.c");
        assert_eq!(diff.new_path, "x.c");
        let post = apply(PRE, &diff).unwrap();
        assert_eq!(post, b"alpha\nBETA\ngamma\ndelta\n");
    }

    #[test]
    fn empty_diff_is_identity() {
        let diff = FileDiff {
            old_path: "x.c".into(),
            new_path: "x.c".into(),
            hunks: vec![],
        };
        assert_eq!(apply(PRE, &diff).unwrap(), PRE);
    }

    #[test]
    fn context_mismatch_is_unreconstructable() {
        let diff = one_file_patch(
            "--- a/x.c\n+++ b/x.c\n@@ -2,1 +2,1 @@\n-WRONG\n+BETA\n",
        );
        let err = apply(PRE, &diff).unwrap_err();
        assert!(matches!(err, Error::Unreconstructable(_)), "{err}");
    }

    #[test]
    fn reverse_application_recovers_the_pre_image() {
        let bodies = [
            "--- a/x.c\n+++ b/x.c\n@@ -2,1 +2,1 @@\n-beta\n+BETA\n",
            "--- a/x.c\n+++ b/x.c\n@@ -1,2 +1,1 @@\n alpha\n-beta\n",
            "--- a/x.c\n+++ b/x.c\n@@ -2,0 +3,2 @@\n+inserted\n+lines\n",
            "--- a/x.c\n+++ b/x.c\n@@ -1,4 +1,3 @@\n-alpha\n+ALPHA\n beta\n-gamma\n delta\n",
        ];
        for body in bodies {
            let diff = one_file_patch(body);
            let post = apply(PRE, &diff).unwrap();
            let back = apply(&post, &invert(&diff)).unwrap();
            assert_eq!(back, PRE, "round trip failed for {body:?}");
        }
    }

    #[test]
    fn insertion_hunk_positions_after_named_line() {
        let diff = one_file_patch(
            "--- a/x.c\n+++ b/x.c\n@@ -2,0 +3,1 @@\n+inserted\n",
        );
        let post = apply(PRE, &diff).unwrap();
        assert_eq!(post, b"alpha\nbeta\ninserted\ngamma\ndelta\n");
    }

    #[test]
    fn multiple_hunks_apply_in_order() {
        let diff = one_file_patch(
            "--- a/x.c\n+++ b/x.c\n@@ -1,1 +1,1 @@\n-alpha\n+A\n@@ -4,1 +4,1 @@\n-delta\n+D\n",
        );
        assert_eq!(apply(PRE, &diff).unwrap(), b"A\nbeta\ngamma\nD\n");
    }

    #[test]
    fn overlapping_hunks_are_rejected() {
        let diff = FileDiff {
            old_path: "x.c".into(),
            new_path: "x.c".into(),
            hunks: vec![
                Hunk {
                    old_start: 2,
                    old_len: 2,
                    new_start: 2,
                    new_len: 2,
                    lines: vec![
                        DiffLine::Context(b"beta\n".to_vec()),
                        DiffLine::Context(b"gamma\n".to_vec()),
                    ],
                },
                Hunk {
                    old_start: 3,
                    old_len: 1,
                    new_start: 3,
                    new_len: 1,
                    lines: vec![DiffLine::Context(b"gamma\n".to_vec())],
                },
            ],
        };
        assert!(matches!(
            apply(PRE, &diff),
            Err(Error::Unreconstructable(_))
        ));
    }

    #[test]
    fn missing_trailing_newline_round_trips() {
        let pre = b"alpha\nlast line";
        let body = "--- a/x.c\n+++ b/x.c\n@@ -2,1 +2,1 @@\n-last line\n\\ No newline at end of file\n+LAST\n\\ No newline at end of file\n";
        let diff = one_file_patch(body);
        let post = apply(pre, &diff).unwrap();
        assert_eq!(post, b"alpha\nLAST");
        assert_eq!(apply(&post, &invert(&diff)).unwrap(), pre);
    }

    #[test]
    fn git_extended_headers_are_skipped() {
        let body = "diff --git a/x.c b/x.c\nindex 123..456 100644\n--- a/x.c\n+++ b/x.c\n@@ -2,1 +2,1 @@\n-beta\n+BETA\n";
        let patch = parse_unified_diff(body.as_bytes(), "abc").unwrap();
        assert_eq!(patch.commit_id, "abc");
        assert_eq!(patch.files.len(), 1);
        assert_eq!(patch.files[0].old_path, "x.c");
    }

    #[test]
    fn new_and_deleted_files_use_dev_null() {
        let body = "--- /dev/null\n+++ b/new.c\n@@ -0,0 +1,1 @@\n+content\n--- a/old.c\n+++ /dev/null\n@@ -1,1 +0,0 @@\n-content\n";
        let patch = parse_unified_diff(body.as_bytes(), "abc").unwrap();
        assert_eq!(patch.files[0].old_path, "/dev/null");
        assert_eq!(patch.files[0].new_path, "new.c");
        assert_eq!(patch.files[0].effective_path(), "new.c");
        assert_eq!(patch.files[1].new_path, "/dev/null");
        assert_eq!(patch.files[1].effective_path(), "old.c");
        // A created file applies onto an empty pre-image.
        assert_eq!(apply(b"", &patch.files[0]).unwrap(), b"content\n");
    }

    #[test]
    fn truncated_hunk_reports_line_number() {
        let body = "--- a/x.c\n+++ b/x.c\n@@ -1,2 +1,2 @@\n alpha\n";
        match parse_unified_diff(body.as_bytes(), "x") {
            Err(Error::Parse { line, .. }) => assert!(line >= 4, "line {line}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_headers_report_line_numbers() {
        for body in [
            "--- a/x.c\n+++ b/x.c\n@@ -x,1 +1,1 @@\n-a\n+b\n",
            "--- a/x.c\n+++ b/x.c\n@@ -1,1 +1,1\n-a\n+b\n",
            "+++ b/x.c\n@@ -1,1 +1,1 @@\n-a\n+b\n",
        ] {
            assert!(
                matches!(
                    parse_unified_diff(body.as_bytes(), "x"),
                    Err(Error::Parse { .. })
                ),
                "accepted {body:?}"
            );
        }
    }

    #[test]
    fn hunk_before_file_header_is_rejected() {
        let body = "@@ -1,1 +1,1 @@\n-a\n+b\n";
        assert!(matches!(
            parse_unified_diff(body.as_bytes(), "x"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn non_utf8_hunk_bodies_survive() {
        let mut body = b"--- a/x.bin\n+++ b/x.bin\n@@ -1,1 +1,1 @@\n-".to_vec();
        body.extend_from_slice(&[0xff, 0xfe, b'\n']);
        body.extend_from_slice(b"+");
        body.extend_from_slice(&[0xde, 0xad, b'\n']);
        let patch = parse_unified_diff(&body, "x").unwrap();
        let pre = [0xff, 0xfe, b'\n'];
        let post = apply(&pre, &patch.files[0]).unwrap();
        assert_eq!(post, [0xde, 0xad, b'\n']);
    }

    #[test]
    fn hunk_byte_ranges_cover_context() {
        // PRE lines start at offsets 0, 6, 11, 17; total 23.
        let hunk = Hunk {
            old_start: 2,
            old_len: 2,
            new_start: 2,
            new_len: 2,
            lines: vec![],
        };
        assert_eq!(hunk_byte_range(PRE, &hunk), (6, 17));
        let insertion = Hunk {
            old_start: 2,
            old_len: 0,
            new_start: 3,
            new_len: 1,
            lines: vec![],
        };
        assert_eq!(hunk_byte_range(PRE, &insertion), (11, 11));
        let whole = Hunk {
            old_start: 1,
            old_len: 4,
            new_start: 1,
            new_len: 4,
            lines: vec![],
        };
        assert_eq!(hunk_byte_range(PRE, &whole), (0, 23));
    }

    #[test]
    fn omitted_hunk_lengths_default_to_one() {
        let diff = one_file_patch("--- a/x.c\n+++ b/x.c\n@@ -2 +2 @@\n-beta\n+BETA\n");
        assert_eq!(diff.hunks[0].old_len, 1);
        assert_eq!(diff.hunks[0].new_len, 1);
    }
}
