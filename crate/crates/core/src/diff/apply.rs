//! Patch application with offset search and `patch`-style fuzz.
//!
//! A hunk is first searched for with all of its context, nearest to the
//! expected line first. With fuzz factor `F`, up to `F` leading and `F`
//! trailing context lines may be ignored; the smallest number of ignored
//! lines that yields a match wins. Deleted lines always have to match.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{diff_texts, FileDiff, Hunk, LineTag};

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{path}: {reason}")]
pub struct ApplyConflict {
    pub path: String,
    pub reason: String,
}

/// How a patch landed on its target tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ApplyReport {
    Clean,
    /// Applied after ignoring this many context lines in total.
    Fuzzed { lines: usize },
    Conflict { path: String, reason: String },
}

impl ApplyReport {
    pub fn is_conflict(&self) -> bool {
        matches!(self, ApplyReport::Conflict { .. })
    }
}

/// Result of applying a whole patch in memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AppliedPatch {
    /// New content per touched path; `None` means the file is deleted.
    pub files: BTreeMap<String, Option<String>>,
    pub fuzz_lines: usize,
}

impl AppliedPatch {
    pub fn report(&self) -> ApplyReport {
        if self.fuzz_lines == 0 {
            ApplyReport::Clean
        } else {
            ApplyReport::Fuzzed {
                lines: self.fuzz_lines,
            }
        }
    }

    /// The change as realized against `original`, rendered as fresh diffs
    /// with `context` lines. Applying these to the same tree is always clean.
    pub fn realized(
        &self,
        original: &BTreeMap<String, Option<String>>,
        context: usize,
    ) -> Vec<FileDiff> {
        let mut out = Vec::new();
        for (path, new) in &self.files {
            let old = original.get(path).cloned().flatten();
            let (old_path, new_path) = (
                old.as_ref().map(|_| path.as_str()),
                new.as_ref().map(|_| path.as_str()),
            );
            if old_path.is_none() && new_path.is_none() {
                continue;
            }
            if let Some(fd) = diff_texts(
                old_path,
                new_path,
                old.as_deref().unwrap_or(""),
                new.as_deref().unwrap_or(""),
                context,
            ) {
                out.push(fd);
            }
        }
        out
    }
}

fn conflict(path: &str, reason: impl Into<String>) -> ApplyConflict {
    ApplyConflict {
        path: path.to_string(),
        reason: reason.into(),
    }
}

fn leading_context(h: &Hunk) -> usize {
    h.lines
        .iter()
        .take_while(|l| l.tag == LineTag::Context)
        .count()
}

fn trailing_context(h: &Hunk) -> usize {
    h.lines
        .iter()
        .rev()
        .take_while(|l| l.tag == LineTag::Context)
        .count()
}

fn matches_at(file: &[&str], at: usize, needle: &[String]) -> bool {
    at + needle.len() <= file.len() && file[at..at + needle.len()].iter().zip(needle).all(|(a, b)| *a == b)
}

/// Nearest-first search for `needle` in `file[lo..]` around `expected`.
fn locate(file: &[&str], lo: usize, expected: usize, needle: &[String]) -> Option<usize> {
    if needle.len() > file.len() {
        return None;
    }
    let hi = file.len() - needle.len();
    if lo > hi {
        return None;
    }
    let expected = expected.clamp(lo, hi);
    let span = (expected - lo).max(hi - expected);
    for d in 0..=span {
        if expected + d <= hi && matches_at(file, expected + d, needle) {
            return Some(expected + d);
        }
        if d > 0 && expected >= lo + d && matches_at(file, expected - d, needle) {
            return Some(expected - d);
        }
    }
    None
}

/// Applies one file's hunks to `original` (`None` = file absent). Returns the
/// new content (`None` = deleted) and the number of context lines ignored.
pub fn apply_file(
    original: Option<&str>,
    diff: &FileDiff,
    fuzz: usize,
) -> Result<(Option<String>, usize), ApplyConflict> {
    let path = diff.path();
    match (original, diff.is_creation()) {
        (Some(_), true) => return Err(conflict(path, "file to be created already exists")),
        (None, false) => return Err(conflict(path, "file to be patched does not exist")),
        _ => {}
    }
    let text = original.unwrap_or("");
    let file: Vec<&str> = text.split_inclusive('\n').collect();
    let mut out: Vec<String> = Vec::with_capacity(file.len());
    let mut cursor = 0usize;
    let mut offset: isize = 0;
    let mut fuzz_lines = 0usize;

    for (idx, hunk) in diff.hunks.iter().enumerate() {
        let old: Vec<String> = hunk.old_lines().map(|l| l.rendered()).collect();
        let new: Vec<String> = hunk.new_lines().map(|l| l.rendered()).collect();
        let base = if hunk.old_len == 0 {
            hunk.old_start
        } else {
            hunk.old_start.saturating_sub(1)
        };
        let expected = (base as isize + offset).max(0) as usize;
        let (pre, suf) = {
            let pre = leading_context(hunk);
            let suf = if pre == hunk.lines.len() { 0 } else { trailing_context(hunk) };
            (pre, suf)
        };

        let mut found: Option<(usize, usize, usize)> = None;
        if old.is_empty() {
            // pure insertion without context: trust the header
            found = Some((expected.clamp(cursor, file.len()), 0, 0));
        } else {
            'search: for level in 0..=fuzz {
                let mut trials: Vec<(usize, usize)> = Vec::new();
                for a in 0..=level.min(pre) {
                    for b in 0..=level.min(suf) {
                        if a.max(b) == level || level == 0 {
                            trials.push((a, b));
                        }
                    }
                }
                trials.sort_by_key(|&(a, b)| (a + b, a));
                for (a, b) in trials {
                    let needle = &old[a..old.len() - b];
                    if needle.is_empty() {
                        continue;
                    }
                    if let Some(at) = locate(&file, cursor, expected + a, needle) {
                        found = Some((at, a, b));
                        break 'search;
                    }
                }
            }
        }
        let Some((at, a, b)) = found else {
            return Err(conflict(path, format!("hunk #{} does not apply", idx + 1)));
        };
        let needle_len = old.len() - a - b;
        out.extend(file[cursor..at].iter().map(|s| s.to_string()));
        out.extend(new[a..new.len() - b].iter().cloned());
        cursor = at + needle_len;
        offset = at as isize - a as isize - base as isize;
        fuzz_lines += a + b;
    }
    out.extend(file[cursor..].iter().map(|s| s.to_string()));
    let result: String = out.concat();

    if diff.is_deletion() {
        if !result.is_empty() {
            return Err(conflict(path, "file to be deleted is not empty after patching"));
        }
        return Ok((None, fuzz_lines));
    }
    Ok((Some(result), fuzz_lines))
}

/// Applies a patch to a tree given as `path -> content` (`None` = absent).
/// Nothing is written; on conflict the first failing file is reported.
pub fn apply_patch(
    tree: &BTreeMap<String, Option<String>>,
    diffs: &[FileDiff],
    fuzz: usize,
) -> Result<AppliedPatch, ApplyConflict> {
    let mut files: BTreeMap<String, Option<String>> = BTreeMap::new();
    let mut fuzz_lines = 0;
    for fd in diffs {
        if let (Some(old), Some(new)) = (&fd.old_path, &fd.new_path) {
            if old != new {
                return Err(conflict(fd.path(), "renames are not supported"));
            }
        }
        let path = fd.path().to_string();
        let current = match files.get(&path) {
            Some(c) => c.clone(),
            None => tree.get(&path).cloned().flatten(),
        };
        let (new, used) = apply_file(current.as_deref(), fd, fuzz)?;
        fuzz_lines += used;
        files.insert(path, new);
    }
    Ok(AppliedPatch { files, fuzz_lines })
}

#[derive(Debug, Error)]
pub enum ApplyError {
    #[error(transparent)]
    Conflict(#[from] ApplyConflict),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn read_optional(path: &Path) -> Result<Option<String>, std::io::Error> {
    match std::fs::read(path) {
        Ok(bytes) => String::from_utf8(bytes)
            .map(Some)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

/// Applies a patch to a checkout on disk. All hunks are checked before any
/// file is written, so a conflict leaves the directory untouched.
pub fn apply_to_dir(dir: &Path, diffs: &[FileDiff], fuzz: usize) -> Result<AppliedPatch, ApplyError> {
    let mut tree = BTreeMap::new();
    for fd in diffs {
        let path = fd.path().to_string();
        let content = read_optional(&dir.join(&path)).map_err(|source| ApplyError::Io {
            path: path.clone(),
            source,
        })?;
        tree.insert(path, content);
    }
    let applied = apply_patch(&tree, diffs, fuzz)?;
    for (path, content) in &applied.files {
        let target = dir.join(path);
        let io = |source| ApplyError::Io {
            path: path.clone(),
            source,
        };
        match content {
            Some(text) => {
                if let Some(parent) = target.parent() {
                    std::fs::create_dir_all(parent).map_err(io)?;
                }
                std::fs::write(&target, text).map_err(io)?;
            }
            None => match std::fs::remove_file(&target) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(io(e)),
            },
        }
    }
    Ok(applied)
}

#[cfg(test)]
mod tests {
    use super::super::{diff_texts, parse_unified, reverse};
    use super::*;

    fn one(path: &str, text: &str) -> BTreeMap<String, Option<String>> {
        BTreeMap::from([(path.to_string(), Some(text.to_string()))])
    }

    const BASE: &str = "a\nb\nc\nd\ne\nf\ng\nh\ni\n";

    #[test]
    fn clean_apply_and_inverse() {
        let target = BASE.replace("e\n", "E\n");
        let fd = diff_texts(Some("x"), Some("x"), BASE, &target, 3).unwrap();
        let applied = apply_patch(&one("x", BASE), &[fd.clone()], 0).unwrap();
        assert_eq!(applied.report(), ApplyReport::Clean);
        assert_eq!(applied.files["x"].as_deref(), Some(target.as_str()));
        let back = apply_patch(&one("x", &target), &reverse(&[fd]), 0).unwrap();
        assert_eq!(back.files["x"].as_deref(), Some(BASE));
    }

    #[test]
    fn offset_without_fuzz() {
        let target = BASE.replace("e\n", "E\n");
        let fd = diff_texts(Some("x"), Some("x"), BASE, &target, 3).unwrap();
        let shifted = format!("0\n00\n{BASE}");
        let applied = apply_patch(&one("x", &shifted), &[fd], 0).unwrap();
        assert_eq!(applied.report(), ApplyReport::Clean);
        assert_eq!(applied.files["x"].as_deref(), Some(format!("0\n00\n{target}").as_str()));
    }

    #[test]
    fn drifted_edge_context_needs_fuzz() {
        let target = BASE.replace("e\n", "E\n");
        let fd = diff_texts(Some("x"), Some("x"), BASE, &target, 3).unwrap();
        // first context line of the hunk ("b") changed since the diff was taken
        let drifted = BASE.replace("b\n", "B\n");
        let err = apply_patch(&one("x", &drifted), &[fd.clone()], 0).unwrap_err();
        assert!(err.reason.contains("does not apply"));
        let applied = apply_patch(&one("x", &drifted), &[fd], 2).unwrap();
        assert_eq!(applied.report(), ApplyReport::Fuzzed { lines: 1 });
        assert_eq!(
            applied.files["x"].as_deref(),
            Some(drifted.replace("e\n", "E\n").as_str())
        );
    }

    #[test]
    fn deleted_lines_must_match_even_with_fuzz() {
        let target = BASE.replace("e\n", "E\n");
        let fd = diff_texts(Some("x"), Some("x"), BASE, &target, 3).unwrap();
        let changed = BASE.replace("e\n", "ee\n");
        assert!(apply_patch(&one("x", &changed), &[fd], 3).is_err());
    }

    #[test]
    fn missing_file_conflicts() {
        let fd = diff_texts(Some("x"), Some("x"), BASE, "z\n", 3).unwrap();
        let tree = BTreeMap::new();
        let err = apply_patch(&tree, &[fd], 2).unwrap_err();
        assert!(err.reason.contains("does not exist"));
    }

    #[test]
    fn creation_and_deletion() {
        let create = diff_texts(None, Some("n"), "", "hello\nworld", 3).unwrap();
        let applied = apply_patch(&BTreeMap::new(), &[create.clone()], 0).unwrap();
        assert_eq!(applied.files["n"].as_deref(), Some("hello\nworld"));
        let del = reverse(&[create]);
        let gone = apply_patch(&one("n", "hello\nworld"), &del, 0).unwrap();
        assert_eq!(gone.files["n"], None);
        assert!(apply_patch(&one("n", "hello\n"), &del, 0).is_err());
    }

    #[test]
    fn realized_patch_applies_cleanly() {
        let target = BASE.replace("e\n", "E\n");
        let fd = diff_texts(Some("x"), Some("x"), BASE, &target, 3).unwrap();
        let drifted = BASE.replace("b\n", "B\n");
        let tree = one("x", &drifted);
        let applied = apply_patch(&tree, &[fd], 2).unwrap();
        let realized = applied.realized(&tree, 3);
        let again = apply_patch(&tree, &realized, 0).unwrap();
        assert_eq!(again.report(), ApplyReport::Clean);
        assert_eq!(again.files, applied.files);
    }

    #[test]
    fn parsed_patch_applies_in_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x"), BASE).unwrap();
        let patch = "--- a/x\n+++ b/x\n@@ -4,3 +4,3 @@\n d\n-e\n+E\n f\n";
        let diffs = parse_unified(patch).unwrap();
        apply_to_dir(dir.path(), &diffs, 0).unwrap();
        let got = std::fs::read_to_string(dir.path().join("x")).unwrap();
        assert_eq!(got, BASE.replace("e\n", "E\n"));
        // conflict leaves the tree alone
        assert!(apply_to_dir(dir.path(), &diffs, 0).is_err());
        assert_eq!(std::fs::read_to_string(dir.path().join("x")).unwrap(), got);
    }
}
