//! The bundled `minilib` fixture: a small Python repository whose git
//! history holds one pull request per mirror outcome, plus authored
//! reproduction-test candidates and the verdicts they should get.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use crate::diff::{diff_texts, render_unified};

pub const REPO_NAME: &str = "minilib";
pub const CUTOFF: &str = "2020-12-31";
/// Tag on the last commit before the cutoff.
pub const PRE_CUTOFF_TAG: &str = "pre-cutoff";
pub const TEST_COMMAND: &str = "python3 -m pytest -q -p no:cacheprovider --junitxml={report} {test_ids}";

/// PR numbers by scenario.
pub const PR_CONFLICT: u64 = 1;
pub const PR_TRUE_BUG: u64 = 2;
pub const PR_NO_SIGNAL: u64 = 3;
pub const PR_BROKEN_BASELINE: u64 = 4;
pub const PR_FUZZED: u64 = 5;
pub const PR_TESTS_ONLY: u64 = 6;
pub const PR_COUNT: usize = 6;
/// PRs with a linked issue in the issue store.
pub const PRS_WITH_ISSUES: [u64; 2] = [PR_TRUE_BUG, PR_BROKEN_BASELINE];

pub const TRUE_BUG_FAIL_TO_PASS: [&str; 2] = [
    "tests/test_cache.py::test_capacity_is_bounded",
    "tests/test_mathx.py::test_clamp_upper",
];
pub const FUZZED_FAIL_TO_PASS: [&str; 1] = ["tests/test_parser.py::test_whitespace_is_stripped"];
/// Context lines the fuzzed PR's reverse patch had to drop.
pub const FUZZED_LINES: usize = 1;
pub const OPS_MODULES: usize = 12;

const HEAD_FILES: [(&str, &str); 15] = [
    ("minilib/__init__.py", include_str!("../fixtures/minilib/minilib/__init__.py")),
    ("minilib/cache.py", include_str!("../fixtures/minilib/minilib/cache.py")),
    ("minilib/config.py", include_str!("../fixtures/minilib/minilib/config.py")),
    ("minilib/dates.py", include_str!("../fixtures/minilib/minilib/dates.py")),
    ("minilib/mathx.py", include_str!("../fixtures/minilib/minilib/mathx.py")),
    ("minilib/parser.py", include_str!("../fixtures/minilib/minilib/parser.py")),
    ("minilib/report.py", include_str!("../fixtures/minilib/minilib/report.py")),
    ("minilib/textutil.py", include_str!("../fixtures/minilib/minilib/textutil.py")),
    ("tests/test_cache.py", include_str!("../fixtures/minilib/tests/test_cache.py")),
    ("tests/test_dates.py", include_str!("../fixtures/minilib/tests/test_dates.py")),
    ("tests/test_mathx.py", include_str!("../fixtures/minilib/tests/test_mathx.py")),
    ("tests/test_ops.py", include_str!("../fixtures/minilib/tests/test_ops.py")),
    ("tests/test_parser.py", include_str!("../fixtures/minilib/tests/test_parser.py")),
    ("tests/test_report.py", include_str!("../fixtures/minilib/tests/test_report.py")),
    ("tests/test_textutil.py", include_str!("../fixtures/minilib/tests/test_textutil.py")),
];

const LEGACY_LOOP: &str = "\"\"\"Old formatting helpers kept for compatibility.\"\"\"


def old_format(values):
    parts = []
    for v in values:
        parts.append(\"%s\" % v)
    return \", \".join(parts)
";

const LEGACY_JOIN: &str = "\"\"\"Old formatting helpers kept for compatibility.\"\"\"


def old_format(values):
    parts = [str(v) for v in values]
    return \", \".join(parts)
";

const ISSUE_TRUE_BUG: &str = "clamp() ignores its upper bound\n\nclamp(42, 0, 10) returns 42 instead of 10, so LRUCache accepts capacities above MAX_CAPACITY.\n";
const ISSUE_BROKEN_BASELINE: &str = "is_leap is wrong for century years\n\nis_leap(1900) returns True; 1900 was not a leap year.\n";

/// Generated module `minilib/ops/ops_NN.py`: three functions that call
/// into other files, the rest local.
pub fn ops_module(n: usize) -> String {
    format!(
        r#""""Generated operations, batch {n:02}."""

from minilib import textutil
from minilib.mathx import clamp, mean


def _offset_{n:02}(x):
    """Shift x by the batch number."""
    y = x + {n}
    return y


def bounded_{n:02}(x):
    """Clamp x after shifting it."""
    shifted = _offset_{n:02}(x)
    return clamp(shifted, 0, 100)


def label_{n:02}(name):
    """Slug label for name."""
    base = textutil.slugify(name)
    return base + "-{n:02}"


def average_{n:02}(values):
    """Mean of shifted values."""
    shifted = [_offset_{n:02}(v) for v in values]
    return mean(shifted)


def double_{n:02}(x):
    """Twice the shifted value."""
    y = _offset_{n:02}(x)
    return y * 2


def pairs_{n:02}(items):
    """Adjacent pairs of items."""
    out = []
    for i in range(len(items) - 1):
        out.append((items[i], items[i + 1]))
    return out


class Counter{n:02}:
    """Counts labels."""

    def __init__(self):
        self.seen = {{}}

    def add(self, name):
        key = label_{n:02}(name)
        self.seen[key] = self.seen.get(key, 0) + 1
        return self.seen[key]
"#
    )
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("git {args}: {stderr}")]
    Git { args: String, stderr: String },
    #[error("fixture edit of {path} did not match")]
    Edit { path: String },
}

enum Op {
    Edit { path: &'static str, before: &'static str, after: &'static str },
    Add { path: String, text: String },
    Delete { path: &'static str, text: &'static str },
}

enum Style {
    Plain,
    Merge { number: u64, branch: &'static str },
    Squash { number: u64 },
}

struct Step {
    date: &'static str,
    title: &'static str,
    style: Style,
    ops: Vec<Op>,
    tag: Option<&'static str>,
}

fn history() -> Vec<Step> {
    let mut ops_added: Vec<Op> = (0..OPS_MODULES)
        .map(|n| Op::Add {
            path: format!("minilib/ops/ops_{n:02}.py"),
            text: ops_module(n),
        })
        .collect();
    ops_added.push(Op::Add {
        path: "minilib/ops/__init__.py".into(),
        text: "\"\"\"Generated operation batches.\"\"\"\n".into(),
    });
    ops_added.push(Op::Add {
        path: "tests/test_ops.py".into(),
        text: head_file("tests/test_ops.py").into(),
    });
    vec![
        Step {
            date: "2020-03-02T10:00:00+00:00",
            title: "Initial import",
            style: Style::Plain,
            ops: vec![],
            tag: None,
        },
        Step {
            date: "2020-04-14T10:00:00+00:00",
            title: "Speed up legacy formatter",
            style: Style::Merge { number: PR_CONFLICT, branch: "dev/legacy-join" },
            ops: vec![Op::Edit {
                path: "minilib/legacy.py",
                before: "    parts = []\n    for v in values:\n        parts.append(\"%s\" % v)\n",
                after: "    parts = [str(v) for v in values]\n",
            }],
            tag: None,
        },
        Step {
            date: "2020-06-18T10:00:00+00:00",
            title: "Fix clamp upper bound",
            style: Style::Merge { number: PR_TRUE_BUG, branch: "dev/clamp" },
            ops: vec![
                Op::Edit {
                    path: "minilib/mathx.py",
                    before: "    return max(lo, x)\n",
                    after: "    return max(lo, min(x, hi))\n",
                },
                Op::Edit {
                    path: "tests/test_mathx.py",
                    before: "\n\ndef test_mean():",
                    after: "\n\ndef test_clamp_upper():\n    assert clamp(42, 0, 10) == 10\n\n\ndef test_mean():",
                },
            ],
            tag: None,
        },
        Step {
            date: "2020-09-07T10:00:00+00:00",
            title: "Add generated ops modules",
            style: Style::Plain,
            ops: ops_added,
            tag: None,
        },
        Step {
            date: "2020-11-23T10:00:00+00:00",
            title: "Document slugify",
            style: Style::Merge { number: PR_NO_SIGNAL, branch: "dev/docs" },
            ops: vec![Op::Edit {
                path: "minilib/textutil.py",
                before: "    \"\"\"Make a slug.\"\"\"\n",
                after: "    \"\"\"Lowercase text and join its words with dashes.\"\"\"\n",
            }],
            tag: Some(PRE_CUTOFF_TAG),
        },
        Step {
            date: "2021-01-19T10:00:00+00:00",
            title: "Fix leap years in centuries",
            style: Style::Squash { number: PR_BROKEN_BASELINE },
            ops: vec![
                Op::Edit {
                    path: "minilib/dates.py",
                    before: "    \"\"\"Gregorian leap-year rule.\"\"\"\n    return year % 4 == 0\n",
                    after: "    \"\"\"Gregorian leap-year rule.\"\"\"\n    if year % 400 == 0:\n        return True\n    if year % 100 == 0:\n        return False\n    return year % 4 == 0\n",
                },
                Op::Edit {
                    path: "tests/test_dates.py",
                    before: "\n\ndef test_february():",
                    after: "\n\ndef test_leap_century():\n    assert is_leap(2000)\n    assert not is_leap(1900)\n\n\ndef test_february():",
                },
            ],
            tag: None,
        },
        Step {
            date: "2021-02-03T10:00:00+00:00",
            title: "Strip whitespace around keys and values",
            style: Style::Merge { number: PR_FUZZED, branch: "dev/strip" },
            ops: vec![
                Op::Edit {
                    path: "minilib/parser.py",
                    before: "    return key, value\n",
                    after: "    return key.strip(), value.strip()\n",
                },
                Op::Edit {
                    path: "tests/test_parser.py",
                    before: "\n\ndef test_normalized_keys():",
                    after: "\n\ndef test_whitespace_is_stripped():\n    assert parse_line(\"  a =  1 \") == (\"a\", \"1\")\n\n\ndef test_normalized_keys():",
                },
            ],
            tag: None,
        },
        Step {
            date: "2021-02-22T10:00:00+00:00",
            title: "Use find in parse_line",
            style: Style::Plain,
            ops: vec![Op::Edit {
                path: "minilib/parser.py",
                before: "    if \"=\" not in line:\n",
                after: "    if line.find(\"=\") < 0:\n",
            }],
            tag: None,
        },
        Step {
            date: "2021-03-08T10:00:00+00:00",
            title: "Remove legacy module",
            style: Style::Plain,
            ops: vec![Op::Delete {
                path: "minilib/legacy.py",
                text: LEGACY_JOIN,
            }],
            tag: None,
        },
        Step {
            date: "2021-03-22T10:00:00+00:00",
            title: "Add report tests",
            style: Style::Merge { number: PR_TESTS_ONLY, branch: "dev/report-tests" },
            ops: vec![Op::Add {
                path: "tests/test_report.py".into(),
                text: head_file("tests/test_report.py").into(),
            }],
            tag: None,
        },
        Step {
            date: "2021-04-06T10:00:00+00:00",
            title: "Guard truncate against tiny widths",
            style: Style::Plain,
            ops: vec![Op::Edit {
                path: "minilib/textutil.py",
                before: "    keep = width - len(marker)\n",
                after: "    keep = max(0, width - len(marker))\n",
            }],
            tag: None,
        },
    ]
}

fn head_file(path: &str) -> &'static str {
    HEAD_FILES.iter().find(|(p, _)| *p == path).map(|(_, t)| *t).expect("known fixture file")
}

fn replace_once(tree: &mut BTreeMap<String, String>, path: &str, from: &str, to: &str) -> Result<(), FixtureError> {
    let text = tree.get_mut(path).ok_or_else(|| FixtureError::Edit { path: path.into() })?;
    if text.matches(from).count() != 1 {
        return Err(FixtureError::Edit { path: path.into() });
    }
    *text = text.replacen(from, to, 1);
    Ok(())
}

/// The tree before the first step: head contents with every step undone.
fn initial_tree(steps: &[Step]) -> Result<BTreeMap<String, String>, FixtureError> {
    let mut tree: BTreeMap<String, String> = HEAD_FILES.iter().map(|(p, t)| (p.to_string(), t.to_string())).collect();
    for step in steps.iter().rev() {
        for op in step.ops.iter().rev() {
            match op {
                Op::Edit { path, before, after } => replace_once(&mut tree, path, after, before)?,
                Op::Add { path, .. } => {
                    tree.remove(path);
                }
                Op::Delete { path, text } => {
                    tree.insert(path.to_string(), text.to_string());
                }
            }
        }
    }
    // the legacy edit's undo leaves the loop version
    debug_assert_eq!(tree.get("minilib/legacy.py").map(String::as_str), Some(LEGACY_LOOP));
    Ok(tree)
}

struct Repo<'a> {
    root: &'a Path,
}

impl Repo<'_> {
    fn git(&self, args: &[&str], date: Option<&str>) -> Result<String, FixtureError> {
        let mut cmd = Command::new("git");
        cmd.args(args)
            .current_dir(self.root)
            .env("GIT_CONFIG_GLOBAL", "/dev/null")
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env("GIT_AUTHOR_NAME", "Fixture Author")
            .env("GIT_AUTHOR_EMAIL", "author@example.com")
            .env("GIT_COMMITTER_NAME", "Fixture Author")
            .env("GIT_COMMITTER_EMAIL", "author@example.com");
        if let Some(d) = date {
            cmd.env("GIT_AUTHOR_DATE", d).env("GIT_COMMITTER_DATE", d);
        }
        let out = cmd.output().map_err(|source| FixtureError::Io {
            path: self.root.to_path_buf(),
            source,
        })?;
        if !out.status.success() {
            return Err(FixtureError::Git {
                args: args.join(" "),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    fn write(&self, path: &str, text: Option<&str>) -> Result<(), FixtureError> {
        let full = self.root.join(path);
        let io = |source| FixtureError::Io {
            path: full.clone(),
            source,
        };
        match text {
            Some(t) => {
                if let Some(parent) = full.parent() {
                    std::fs::create_dir_all(parent).map_err(io)?;
                }
                std::fs::write(&full, t).map_err(io)
            }
            None => std::fs::remove_file(&full).map_err(io),
        }
    }

    fn commit_all(&self, message: &str, date: &str) -> Result<(), FixtureError> {
        self.git(&["add", "-A"], None)?;
        self.git(&["commit", "-q", "--no-gpg-sign", "-m", message], Some(date))?;
        Ok(())
    }
}

/// Paths of a built fixture.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub dir: PathBuf,
    pub repo: PathBuf,
    pub issues: PathBuf,
    pub head: String,
}

/// Earlier timestamp on the same day, for branch commits.
fn branch_date(date: &str) -> String {
    date.replacen("T10:", "T09:", 1)
}

/// Builds `<dir>/minilib` (the repository) and `<dir>/issues` (the linked
/// issue store). Commit ids are the same on every run.
pub fn build(dir: &Path) -> Result<Fixture, FixtureError> {
    let repo_dir = dir.join(REPO_NAME);
    let issues = dir.join("issues");
    for d in [&repo_dir, &issues] {
        std::fs::create_dir_all(d).map_err(|source| FixtureError::Io {
            path: d.to_path_buf(),
            source,
        })?;
    }
    for (n, text) in [(PR_TRUE_BUG, ISSUE_TRUE_BUG), (PR_BROKEN_BASELINE, ISSUE_BROKEN_BASELINE)] {
        let p = issues.join(format!("issue_{n}.txt"));
        std::fs::write(&p, text).map_err(|source| FixtureError::Io { path: p, source })?;
    }

    let steps = history();
    let mut tree = initial_tree(&steps)?;
    let repo = Repo { root: &repo_dir };
    repo.git(&["init", "-q", "-b", "main"], None)?;
    for (i, step) in steps.iter().enumerate() {
        let mut changed: Vec<(String, Option<String>)> = Vec::new();
        if i == 0 {
            changed.extend(tree.iter().map(|(p, t)| (p.clone(), Some(t.clone()))));
        }
        for op in &step.ops {
            match op {
                Op::Edit { path, before, after } => {
                    replace_once(&mut tree, path, before, after)?;
                    changed.push((path.to_string(), Some(tree[*path].clone())));
                }
                Op::Add { path, text } => {
                    tree.insert(path.clone(), text.clone());
                    changed.push((path.clone(), Some(text.clone())));
                }
                Op::Delete { path, .. } => {
                    tree.remove(*path);
                    changed.push((path.to_string(), None));
                }
            }
        }
        match step.style {
            Style::Plain => {
                for (p, t) in &changed {
                    repo.write(p, t.as_deref())?;
                }
                repo.commit_all(step.title, step.date)?;
            }
            Style::Squash { number } => {
                for (p, t) in &changed {
                    repo.write(p, t.as_deref())?;
                }
                repo.commit_all(&format!("{} (#{number})", step.title), step.date)?;
            }
            Style::Merge { number, branch } => {
                repo.git(&["checkout", "-q", "-b", branch], None)?;
                for (p, t) in &changed {
                    repo.write(p, t.as_deref())?;
                }
                repo.commit_all(step.title, &branch_date(step.date))?;
                repo.git(&["checkout", "-q", "main"], None)?;
                let subject = format!("Merge pull request #{number} from {branch}");
                repo.git(
                    &["merge", "-q", "--no-ff", "--no-gpg-sign", "-m", &subject, "-m", step.title, branch],
                    Some(step.date),
                )?;
            }
        }
        if let Some(tag) = step.tag {
            repo.git(&["tag", tag], None)?;
        }
    }
    let head = repo.git(&["rev-parse", "HEAD"], None)?;
    Ok(Fixture {
        dir: dir.to_path_buf(),
        repo: repo_dir,
        issues,
        head,
    })
}

/// Contents at head of a fixture file, including generated ones.
pub fn head_contents(path: &str) -> Option<String> {
    if let Some((_, t)) = HEAD_FILES.iter().find(|(p, _)| *p == path) {
        return Some(t.to_string());
    }
    let n = path.strip_prefix("minilib/ops/ops_")?.strip_suffix(".py")?.parse::<usize>().ok()?;
    (n < OPS_MODULES).then(|| ops_module(n))
}

/// Expected verdict of a reproduction-test candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReproExpectation {
    Accepted,
    NoRepro,
    TouchesSource,
}

/// Authored reproduction-test candidates for the true bug, as unified
/// diffs against head, with their expected verdicts.
pub fn repro_candidates() -> Vec<(&'static str, String, ReproExpectation)> {
    let edit = |path: &str, extra: &str| {
        let old = head_contents(path).expect("fixture file");
        let new = format!("{old}{extra}");
        let d = diff_texts(Some(path), Some(path), &old, &new, 3).expect("non-empty change");
        render_unified(&[d])
    };
    let source_change = {
        let path = "minilib/mathx.py";
        let old = head_contents(path).expect("fixture file");
        let new = old.replace("raise ValueError(\"empty interval\")", "raise ValueError(\"empty interval: lo > hi\")");
        let d = diff_texts(Some(path), Some(path), &old, &new, 3).expect("non-empty change");
        let test = edit(
            "tests/test_mathx.py",
            "\n\ndef test_clamp_rejects_empty_interval():\n    try:\n        clamp(1, 5, 0)\n    except ValueError:\n        return\n    assert False\n",
        );
        render_unified(&[d]) + &test
    };
    vec![
        (
            "accepted",
            edit("tests/test_mathx.py", "\n\ndef test_clamp_caps_large_values():\n    assert clamp(1000, 0, 5) == 5\n"),
            ReproExpectation::Accepted,
        ),
        (
            "no_repro",
            edit("tests/test_mathx.py", "\n\ndef test_clamp_keeps_zero():\n    assert clamp(0, 0, 5) == 0\n"),
            ReproExpectation::NoRepro,
        ),
        ("touches_source", source_change, ReproExpectation::TouchesSource),
    ]
}

/// A configuration for the fixture, relative to the fixture directory.
pub fn sample_config(seed: u64) -> String {
    format!(
        r#"# Pipeline configuration for the minilib fixture.
repo = "{REPO_NAME}"
cutoff = "{CUTOFF}"
seed = {seed}
output_dir = "out"
max_parallel = 2

[budgets]
design = 6
fim = 16
replay = 10

[design]
granularities = ["module", "file", "chunk"]

[fim]
neg_ratio = 0.25

[mirror]
fuzz = 2
filter = "relaxed"
issue_store = "issues"

[env]
test_command = "{TEST_COMMAND}"
report_format = "junit-xml"

[harness]
timeout_secs = 300
"#
    )
}

/// Builds the fixture into `dir` and writes `rcxforge.toml` next to it.
pub fn build_with_config(dir: &Path, seed: u64) -> Result<(Fixture, PathBuf), FixtureError> {
    let fixture = build(dir)?;
    let path = dir.join("rcxforge.toml");
    std::fs::write(&path, sample_config(seed)).map_err(|source| FixtureError::Io {
        path: path.clone(),
        source,
    })?;
    Ok((fixture, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_replays_to_head() {
        let dir = tempfile::tempdir().unwrap();
        let f = build(dir.path()).unwrap();
        for (path, text) in HEAD_FILES {
            assert_eq!(std::fs::read_to_string(f.repo.join(path)).unwrap(), text, "{path}");
        }
        assert!(!f.repo.join("minilib/legacy.py").exists());
        let again = tempfile::tempdir().unwrap();
        assert_eq!(build(again.path()).unwrap().head, f.head);
    }
}
