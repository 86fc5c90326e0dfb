//! Unified diffs: the in-memory model, a parser for `git diff` / `diff -u`
//! output, a renderer, and inversion.
//!
//! Line text never carries its terminator. A line whose source had no
//! trailing newline is flagged with `no_newline`, which keeps rendering and
//! application byte-exact.

pub mod apply;

use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use similar::{ChangeTag, TextDiff};
use thiserror::Error;

pub use apply::{apply_file, apply_patch, apply_to_dir, ApplyConflict, ApplyReport, AppliedPatch};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed diff at line {line}: {message}")]
pub struct DiffParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineTag {
    Context,
    Add,
    Delete,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub tag: LineTag,
    pub text: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_newline: bool,
}

impl DiffLine {
    pub fn new(tag: LineTag, text: impl Into<String>) -> Self {
        Self {
            tag,
            text: text.into(),
            no_newline: false,
        }
    }

    /// The line as it appears in a file, terminator included.
    pub fn rendered(&self) -> String {
        if self.no_newline {
            self.text.clone()
        } else {
            format!("{}\n", self.text)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    pub lines: Vec<DiffLine>,
}

impl Hunk {
    pub fn old_lines(&self) -> impl Iterator<Item = &DiffLine> {
        self.lines.iter().filter(|l| l.tag != LineTag::Add)
    }

    pub fn new_lines(&self) -> impl Iterator<Item = &DiffLine> {
        self.lines.iter().filter(|l| l.tag != LineTag::Delete)
    }

    pub fn added(&self) -> usize {
        self.lines.iter().filter(|l| l.tag == LineTag::Add).count()
    }

    pub fn deleted(&self) -> usize {
        self.lines.iter().filter(|l| l.tag == LineTag::Delete).count()
    }

    pub fn reversed(&self) -> Hunk {
        Hunk {
            old_start: self.new_start,
            old_len: self.new_len,
            new_start: self.old_start,
            new_len: self.old_len,
            lines: self
                .lines
                .iter()
                .map(|l| DiffLine {
                    tag: match l.tag {
                        LineTag::Add => LineTag::Delete,
                        LineTag::Delete => LineTag::Add,
                        LineTag::Context => LineTag::Context,
                    },
                    text: l.text.clone(),
                    no_newline: l.no_newline,
                })
                .collect(),
        }
    }

    /// 1-based line numbers on the new side that carry added lines.
    pub fn added_new_lines(&self) -> Vec<usize> {
        let mut line = self.new_start.max(1);
        let mut out = Vec::new();
        for l in &self.lines {
            match l.tag {
                LineTag::Add => {
                    out.push(line);
                    line += 1;
                }
                LineTag::Context => line += 1,
                LineTag::Delete => {}
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

impl FileDiff {
    /// The path this diff is about: the new path, or the old one for deletions.
    pub fn path(&self) -> &str {
        self.new_path
            .as_deref()
            .or(self.old_path.as_deref())
            .expect("file diff without any path")
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        let old = self.old_path.as_deref();
        let new = self.new_path.as_deref().filter(|n| Some(*n) != old);
        old.into_iter().chain(new)
    }

    pub fn is_creation(&self) -> bool {
        self.old_path.is_none()
    }

    pub fn is_deletion(&self) -> bool {
        self.new_path.is_none()
    }

    pub fn added(&self) -> usize {
        self.hunks.iter().map(Hunk::added).sum()
    }

    pub fn deleted(&self) -> usize {
        self.hunks.iter().map(Hunk::deleted).sum()
    }

    pub fn reversed(&self) -> FileDiff {
        FileDiff {
            old_path: self.new_path.clone(),
            new_path: self.old_path.clone(),
            hunks: self.hunks.iter().map(Hunk::reversed).collect(),
        }
    }
}

/// Inverts a patch: additions become deletions and old/new sides swap.
pub fn reverse(diffs: &[FileDiff]) -> Vec<FileDiff> {
    diffs.iter().map(FileDiff::reversed).collect()
}

/// Sum of added + deleted lines across every hunk.
pub fn changed_lines(diffs: &[FileDiff]) -> usize {
    diffs.iter().map(|d| d.added() + d.deleted()).sum()
}

static HUNK_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@").expect("valid regex")
});

fn strip_prefix_path(raw: &str) -> Option<String> {
    // `--- a/path\t2020-01-01 ...` style timestamps follow a tab
    let raw = raw.split('\t').next().unwrap_or(raw).trim_end();
    if raw == "/dev/null" {
        return None;
    }
    let stripped = raw
        .strip_prefix("a/")
        .or_else(|| raw.strip_prefix("b/"))
        .unwrap_or(raw);
    Some(stripped.to_string())
}

/// Parses unified diff text (with or without `diff --git` headers). Binary
/// file entries and pure mode changes are dropped.
pub fn parse_unified(text: &str) -> Result<Vec<FileDiff>, DiffParseError> {
    let mut files: Vec<FileDiff> = Vec::new();
    let mut current: Option<FileDiff> = None;
    let mut binary = false;
    let lines: Vec<&str> = text.split('\n').collect();
    let mut i = 0;

    let finish = |cur: Option<FileDiff>, binary: bool, files: &mut Vec<FileDiff>| {
        if let Some(fd) = cur {
            let meaningful =
                !fd.hunks.is_empty() || fd.old_path.is_none() || fd.new_path.is_none();
            if !binary && meaningful && (fd.old_path.is_some() || fd.new_path.is_some()) {
                files.push(fd);
            }
        }
    };

    while i < lines.len() {
        let line = lines[i];
        if let Some(rest) = line.strip_prefix("diff --git ") {
            finish(current.take(), binary, &mut files);
            binary = false;
            // best effort: "a/x b/x"; refined by ---/+++ when present
            let (old, new) = match rest.split_once(" b/") {
                Some((a, b)) => (strip_prefix_path(a), Some(b.to_string())),
                None => (None, None),
            };
            current = Some(FileDiff {
                old_path: old,
                new_path: new,
                hunks: Vec::new(),
            });
            i += 1;
        } else if line.starts_with("new file mode") {
            if let Some(c) = current.as_mut() {
                c.old_path = None;
            }
            i += 1;
        } else if line.starts_with("deleted file mode") {
            if let Some(c) = current.as_mut() {
                c.new_path = None;
            }
            i += 1;
        } else if line.starts_with("Binary files ") || line.starts_with("GIT binary patch") {
            binary = true;
            i += 1;
        } else if let Some(old) = line.strip_prefix("--- ") {
            let Some(new) = lines.get(i + 1).and_then(|l| l.strip_prefix("+++ ")) else {
                return Err(DiffParseError {
                    line: i + 1,
                    message: "'---' header without '+++'".into(),
                });
            };
            let has_git_header = current.as_ref().is_some_and(|c| c.hunks.is_empty());
            if !has_git_header {
                finish(current.take(), binary, &mut files);
                binary = false;
            }
            current = Some(FileDiff {
                old_path: strip_prefix_path(old),
                new_path: strip_prefix_path(new),
                hunks: Vec::new(),
            });
            i += 2;
        } else if line.starts_with("@@") {
            let caps = HUNK_HEADER.captures(line).ok_or_else(|| DiffParseError {
                line: i + 1,
                message: format!("bad hunk header {line:?}"),
            })?;
            let num = |idx: usize, default: usize| {
                caps.get(idx)
                    .map(|m| m.as_str().parse::<usize>().unwrap_or(default))
                    .unwrap_or(default)
            };
            let mut hunk = Hunk {
                old_start: num(1, 0),
                old_len: num(2, 1),
                new_start: num(3, 0),
                new_len: num(4, 1),
                lines: Vec::new(),
            };
            let Some(fd) = current.as_mut() else {
                return Err(DiffParseError {
                    line: i + 1,
                    message: "hunk before any file header".into(),
                });
            };
            i += 1;
            let (mut old_seen, mut new_seen) = (0, 0);
            while old_seen < hunk.old_len || new_seen < hunk.new_len {
                let Some(&body) = lines.get(i) else {
                    return Err(DiffParseError {
                        line: i + 1,
                        message: "hunk truncated".into(),
                    });
                };
                let (tag, text) = match body.as_bytes().first() {
                    Some(b' ') => (LineTag::Context, &body[1..]),
                    Some(b'+') => (LineTag::Add, &body[1..]),
                    Some(b'-') => (LineTag::Delete, &body[1..]),
                    // some tools strip the lone space of empty context lines
                    None => (LineTag::Context, ""),
                    Some(b'\\') => {
                        if let Some(last) = hunk.lines.last_mut() {
                            last.no_newline = true;
                        }
                        i += 1;
                        continue;
                    }
                    _ => {
                        return Err(DiffParseError {
                            line: i + 1,
                            message: format!("unexpected hunk line {body:?}"),
                        })
                    }
                };
                match tag {
                    LineTag::Context => {
                        old_seen += 1;
                        new_seen += 1;
                    }
                    LineTag::Delete => old_seen += 1,
                    LineTag::Add => new_seen += 1,
                }
                hunk.lines.push(DiffLine::new(tag, text));
                i += 1;
            }
            if old_seen != hunk.old_len || new_seen != hunk.new_len {
                return Err(DiffParseError {
                    line: i,
                    message: "hunk line counts disagree with header".into(),
                });
            }
            if lines.get(i).is_some_and(|l| l.starts_with('\\')) {
                if let Some(last) = hunk.lines.last_mut() {
                    last.no_newline = true;
                }
                i += 1;
            }
            fd.hunks.push(hunk);
        } else {
            i += 1;
        }
    }
    finish(current.take(), binary, &mut files);
    Ok(files)
}

fn range(start: usize, len: usize) -> String {
    if len == 1 {
        start.to_string()
    } else {
        format!("{start},{len}")
    }
}

/// Renders diffs in `patch -p1` compatible unified format.
pub fn render_unified(diffs: &[FileDiff]) -> String {
    let mut out = String::new();
    for fd in diffs {
        let old = fd.old_path.as_deref().map(|p| format!("a/{p}"));
        let new = fd.new_path.as_deref().map(|p| format!("b/{p}"));
        let git_old = fd.old_path.as_deref().or(fd.new_path.as_deref()).unwrap_or_default();
        let git_new = fd.new_path.as_deref().or(fd.old_path.as_deref()).unwrap_or_default();
        let _ = writeln!(out, "diff --git a/{git_old} b/{git_new}");
        if fd.is_creation() {
            out.push_str("new file mode 100644\n");
        } else if fd.is_deletion() {
            out.push_str("deleted file mode 100644\n");
        }
        if fd.hunks.is_empty() {
            continue;
        }
        let _ = writeln!(out, "--- {}", old.as_deref().unwrap_or("/dev/null"));
        let _ = writeln!(out, "+++ {}", new.as_deref().unwrap_or("/dev/null"));
        for h in &fd.hunks {
            let _ = writeln!(
                out,
                "@@ -{} +{} @@",
                range(h.old_start, h.old_len),
                range(h.new_start, h.new_len)
            );
            for l in &h.lines {
                let sigil = match l.tag {
                    LineTag::Context => ' ',
                    LineTag::Add => '+',
                    LineTag::Delete => '-',
                };
                let _ = writeln!(out, "{sigil}{}", l.text);
                if l.no_newline {
                    out.push_str("\\ No newline at end of file\n");
                }
            }
        }
    }
    out
}

fn to_diff_line(tag: LineTag, value: &str) -> DiffLine {
    match value.strip_suffix('\n') {
        Some(text) => DiffLine::new(tag, text),
        None => DiffLine {
            tag,
            text: value.to_string(),
            no_newline: true,
        },
    }
}

/// Line diff between two texts with `context` lines around each change.
/// Returns `None` when the texts are identical and neither side is absent.
pub fn diff_texts(
    old_path: Option<&str>,
    new_path: Option<&str>,
    old: &str,
    new: &str,
    context: usize,
) -> Option<FileDiff> {
    let creation_or_deletion = old_path.is_none() || new_path.is_none();
    if old == new && !creation_or_deletion {
        return None;
    }
    let diff = TextDiff::from_lines(old, new);
    let mut hunks = Vec::new();
    for group in diff.grouped_ops(context) {
        let (Some(first), Some(last)) = (group.first(), group.last()) else {
            continue;
        };
        let old_range = first.old_range().start..last.old_range().end;
        let new_range = first.new_range().start..last.new_range().end;
        let mut lines = Vec::new();
        for op in &group {
            for change in diff.iter_changes(op) {
                let tag = match change.tag() {
                    ChangeTag::Equal => LineTag::Context,
                    ChangeTag::Delete => LineTag::Delete,
                    ChangeTag::Insert => LineTag::Add,
                };
                lines.push(to_diff_line(tag, change.value()));
            }
        }
        let start = |r: &std::ops::Range<usize>| if r.is_empty() { r.start } else { r.start + 1 };
        hunks.push(Hunk {
            old_start: start(&old_range),
            old_len: old_range.len(),
            new_start: start(&new_range),
            new_len: new_range.len(),
            lines,
        });
    }
    Some(FileDiff {
        old_path: old_path.map(str::to_string),
        new_path: new_path.map(str::to_string),
        hunks,
    })
}
