//! Repository mining: first-parent history, pull-request change-sets,
//! per-object commit heat and the temporal train/eval split.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cutoff::Cutoff;
use crate::diff::{self, FileDiff};
use crate::git::{Git, GitError};
use crate::layout::TestLayout;
use crate::syntax::SyntaxRegistry;

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("invalid repository {root}: {reason}")]
    InvalidRepository { root: PathBuf, reason: String },
    #[error(transparent)]
    Git(#[from] GitError),
    #[error("diff for {commit}: {source}")]
    Diff {
        commit: String,
        source: diff::DiffParseError,
    },
}

/// An immutable view of one commit of a repository, plus the cutoff date.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSnapshot {
    pub root: PathBuf,
    pub head: String,
    pub cutoff: Cutoff,
    pub head_timestamp: i64,
}

impl RepoSnapshot {
    /// Opens `root` at revision `rev` (a commit id, abbreviation or ref).
    pub fn open(root: impl AsRef<Path>, rev: &str, cutoff: Cutoff) -> Result<Self, MinerError> {
        let root = root.as_ref().to_path_buf();
        let invalid = |reason: String| MinerError::InvalidRepository {
            root: root.clone(),
            reason,
        };
        if !root.is_dir() {
            return Err(invalid("not a directory".into()));
        }
        let git = Git::new(&root);
        if !git.is_repository() {
            return Err(invalid("no repository metadata".into()));
        }
        let head = git
            .resolve_commit(rev)
            .map_err(|e| invalid(format!("cannot resolve {rev:?}: {e}")))?;
        let head_timestamp = git.commit_time(&head)?;
        Ok(Self {
            root,
            head,
            cutoff,
            head_timestamp,
        })
    }

    pub fn git(&self) -> Git {
        Git::new(&self.root)
    }

    /// Repository name: the directory name of the root.
    pub fn name(&self) -> String {
        self.root
            .canonicalize()
            .unwrap_or_else(|_| self.root.clone())
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "repo".into())
    }

    pub fn files(&self) -> Result<Vec<String>, MinerError> {
        Ok(self.git().list_files(&self.head)?)
    }

    /// UTF-8 contents at head of the given paths; binary or missing files are
    /// left out.
    pub fn read_files(&self, paths: &[String]) -> Result<BTreeMap<String, String>, MinerError> {
        let blobs = self.git().read_blobs(&self.head, paths)?;
        Ok(blobs
            .into_iter()
            .filter_map(|(p, b)| String::from_utf8(b).ok().map(|s| (p, s)))
            .collect())
    }

    /// Every source file the registry can handle, with contents.
    pub fn source_files(
        &self,
        registry: &SyntaxRegistry,
    ) -> Result<BTreeMap<String, String>, MinerError> {
        let paths: Vec<String> = self
            .files()?
            .into_iter()
            .filter(|p| registry.handles(p))
            .collect();
        self.read_files(&paths)
    }

    /// Provenance of anything derived from the head tree alone.
    pub fn head_provenance(&self) -> Provenance {
        Provenance::new([(self.head.clone(), self.head_timestamp)])
    }
}

/// Source commits an artifact was derived from. The timestamp is the latest
/// of them, so an artifact is never older than anything it reveals.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub source_commits: Vec<String>,
    pub timestamp: Option<i64>,
}

impl Provenance {
    pub fn new(commits: impl IntoIterator<Item = (String, i64)>) -> Self {
        let mut ids = Vec::new();
        let mut ts: Option<i64> = None;
        for (id, t) in commits {
            if !ids.contains(&id) {
                ids.push(id);
            }
            ts = Some(ts.map_or(t, |cur| cur.max(t)));
        }
        Self {
            source_commits: ids,
            timestamp: ts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedPath {
    pub path: String,
    pub added: usize,
    pub deleted: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub id: String,
    pub timestamp: i64,
    pub parents: Vec<String>,
    pub message: String,
    pub changed: Vec<ChangedPath>,
}

impl CommitRecord {
    pub fn subject(&self) -> &str {
        self.message.lines().next().unwrap_or("")
    }

    pub fn is_merge(&self) -> bool {
        self.parents.len() > 1
    }
}

/// First-parent history from head, newest first. `limit = None` walks to the
/// root commit.
pub fn mine_commits(
    snapshot: &RepoSnapshot,
    limit: Option<usize>,
) -> Result<Vec<CommitRecord>, MinerError> {
    if limit == Some(0) {
        return Ok(Vec::new());
    }
    let mut args: Vec<String> = vec![
        "log".into(),
        "--first-parent".into(),
        "--diff-merges=first-parent".into(),
        "--no-renames".into(),
        "--numstat".into(),
        "--format=%x1e%H%x00%ct%x00%P%x00%B%x00".into(),
    ];
    if let Some(n) = limit {
        args.push(format!("--max-count={n}"));
    }
    args.push(snapshot.head.clone());
    let out = snapshot.git().run_text(&args)?;
    let mut records = Vec::new();
    for chunk in out.split('\x1e').filter(|c| !c.trim().is_empty()) {
        let mut fields = chunk.splitn(5, '\0');
        let bad = || GitError::Output(format!("bad log record: {chunk:?}"));
        let id = fields.next().ok_or_else(bad)?.trim().to_string();
        let timestamp: i64 = fields
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(bad)?;
        let parents = fields
            .next()
            .ok_or_else(bad)?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let message = fields.next().ok_or_else(bad)?.trim_end().to_string();
        let stats = fields.next().unwrap_or("");
        let mut changed = Vec::new();
        for line in stats.lines().filter(|l| !l.trim().is_empty()) {
            let mut parts = line.splitn(3, '\t');
            let (Some(a), Some(d), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
                continue;
            };
            changed.push(ChangedPath {
                path: path.to_string(),
                // binary files report "-"
                added: a.parse().unwrap_or(0),
                deleted: d.parse().unwrap_or(0),
            });
        }
        if timestamp <= 0 {
            return Err(bad().into());
        }
        records.push(CommitRecord {
            id,
            timestamp,
            parents,
            message,
            changed,
        });
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrStyle {
    Merge,
    Squash,
}

static MERGE_PR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^Merge pull request #(\d+) from \S+").expect("valid regex"));
static SQUASH_PR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(#(\d+)\)\s*$").expect("valid regex"));

/// Recognizes `Merge pull request #N from ...` merge commits and squash
/// commits whose subject ends in `(#N)`.
pub fn parse_pr_reference(message: &str) -> Option<(u64, PrStyle)> {
    let subject = message.lines().next().unwrap_or("").trim();
    if let Some(c) = MERGE_PR.captures(subject) {
        return c[1].parse().ok().map(|n| (n, PrStyle::Merge));
    }
    SQUASH_PR
        .captures(subject)
        .and_then(|c| c[1].parse().ok())
        .map(|n| (n, PrStyle::Squash))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRecord {
    pub pr_number: Option<u64>,
    pub title: String,
    pub merge_commit: String,
    pub base_commit: String,
    pub diff: Vec<FileDiff>,
    pub merged_at: i64,
    pub linked_issue_text: Option<String>,
    pub touched_test_paths: Vec<String>,
    pub total_changed_lines: usize,
}

impl PullRecord {
    /// Diffs of non-test files.
    pub fn source_diff(&self) -> Vec<FileDiff> {
        self.diff
            .iter()
            .filter(|d| !d.paths().any(|p| self.touched_test_paths.iter().any(|t| t == p)))
            .cloned()
            .collect()
    }

    pub fn paths(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.diff.iter().flat_map(|d| d.paths()).collect();
        set.into_iter().map(str::to_string).collect()
    }
}

/// Directory of `issue_<N>.txt` files holding linked issue bodies.
#[derive(Clone, Debug)]
pub struct IssueStore {
    dir: PathBuf,
}

impl IssueStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn lookup(&self, pr_number: u64) -> Option<String> {
        let text = std::fs::read_to_string(self.dir.join(format!("issue_{pr_number}.txt"))).ok()?;
        (!text.trim().is_empty()).then_some(text)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullMining {
    pub pulls: Vec<PullRecord>,
    /// Commits that matched no PR pattern.
    pub skipped: usize,
}

fn pr_title(commit: &CommitRecord, style: PrStyle) -> String {
    match style {
        // GitHub puts the PR title on the first non-empty body line
        PrStyle::Merge => commit
            .message
            .lines()
            .skip(1)
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or_else(|| commit.subject())
            .to_string(),
        PrStyle::Squash => SQUASH_PR.replace(commit.subject(), "").trim().to_string(),
    }
}

/// One PullRecord per recognized PR commit in `commits`.
pub fn mine_pulls(
    snapshot: &RepoSnapshot,
    commits: &[CommitRecord],
    layout: &TestLayout,
    issues: Option<&IssueStore>,
) -> Result<PullMining, MinerError> {
    let git = snapshot.git();
    let mut result = PullMining::default();
    for commit in commits {
        let Some((number, style)) = parse_pr_reference(&commit.message) else {
            result.skipped += 1;
            continue;
        };
        let Some(base) = commit.parents.first().cloned() else {
            result.skipped += 1;
            continue;
        };
        let text = git.diff(&base, &commit.id, 3)?;
        let diff = diff::parse_unified(&text).map_err(|source| MinerError::Diff {
            commit: commit.id.clone(),
            source,
        })?;
        let touched: BTreeSet<&str> = diff.iter().flat_map(|d| d.paths()).collect();
        let touched_test_paths = touched
            .into_iter()
            .filter(|p| layout.is_test_path(p))
            .map(str::to_string)
            .collect();
        result.pulls.push(PullRecord {
            pr_number: Some(number),
            title: pr_title(commit, style),
            merge_commit: commit.id.clone(),
            base_commit: base,
            total_changed_lines: diff::changed_lines(&diff),
            diff,
            merged_at: commit.timestamp,
            linked_issue_text: issues.and_then(|s| s.lookup(number)),
            touched_test_paths,
        });
    }
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Module,
    File,
    Chunk,
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "module" => Ok(Self::Module),
            "file" => Ok(Self::File),
            "chunk" => Ok(Self::Chunk),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Module => "module",
            Self::File => "file",
            Self::Chunk => "chunk",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub granularity: Granularity,
    pub scores: BTreeMap<String, f64>,
    /// Most recent touching commit time per object.
    pub last_touch: BTreeMap<String, i64>,
    pub lookback_commits: usize,
}

impl HeatMap {
    pub fn score(&self, id: &str) -> f64 {
        self.scores.get(id).copied().unwrap_or(0.0)
    }

    /// Hottest first; ties by most recent touch, then by id.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut v: Vec<(String, f64)> = self.scores.iter().map(|(k, s)| (k.clone(), *s)).collect();
        v.sort_by(|(a, sa), (b, sb)| {
            sb.total_cmp(sa)
                .then_with(|| {
                    let ta = self.last_touch.get(a).copied().unwrap_or(i64::MIN);
                    let tb = self.last_touch.get(b).copied().unwrap_or(i64::MIN);
                    tb.cmp(&ta)
                })
                .then_with(|| a.cmp(b))
        });
        v
    }
}

/// Directory of a path; `.` for top-level files.
pub fn module_of(path: &str) -> String {
    match path.rsplit_once('/') {
        Some((dir, _)) => dir.to_string(),
        None => ".".to_string(),
    }
}

/// Identifier of a chunk object.
pub fn chunk_id(path: &str, start_line: usize, end_line: usize) -> String {
    format!("{path}:{start_line}-{end_line}")
}

/// Counts, for each object, the window commits that touch it.
pub fn count_touches<'a>(
    objects: impl IntoIterator<Item = &'a str>,
    window: &[CommitRecord],
    touches: impl Fn(&str, &CommitRecord) -> bool,
    granularity: Granularity,
) -> HeatMap {
    let mut scores = BTreeMap::new();
    let mut last_touch = BTreeMap::new();
    for obj in objects {
        let mut count = 0usize;
        for c in window {
            if touches(obj, c) {
                count += 1;
                let t = last_touch.entry(obj.to_string()).or_insert(c.timestamp);
                *t = (*t).max(c.timestamp);
            }
        }
        scores.insert(obj.to_string(), count as f64);
    }
    HeatMap {
        granularity,
        scores,
        last_touch,
        lookback_commits: window.len(),
    }
}

/// Pre-cutoff commits, newest first, truncated to `lookback`.
pub fn heat_window(
    commits: &[CommitRecord],
    cutoff: &Cutoff,
    lookback: Option<usize>,
) -> Vec<CommitRecord> {
    commits
        .iter()
        .filter(|c| cutoff.admits(c.timestamp))
        .take(lookback.unwrap_or(usize::MAX))
        .cloned()
        .collect()
}

/// Commit heat of every object at head. Chunks are top-level definitions
/// found by the syntax registry; their touches come from git's line-range
/// history so that edits elsewhere in the file do not count.
pub fn commit_heat(
    snapshot: &RepoSnapshot,
    commits: &[CommitRecord],
    granularity: Granularity,
    lookback: Option<usize>,
    registry: &SyntaxRegistry,
) -> Result<HeatMap, MinerError> {
    let window = heat_window(commits, &snapshot.cutoff, lookback);
    let sources = snapshot.source_files(registry)?;
    match granularity {
        Granularity::File => Ok(count_touches(
            sources.keys().map(String::as_str),
            &window,
            |obj, c| c.changed.iter().any(|p| p.path == obj),
            granularity,
        )),
        Granularity::Module => {
            let modules: BTreeSet<String> = sources.keys().map(|p| module_of(p)).collect();
            Ok(count_touches(
                modules.iter().map(String::as_str),
                &window,
                |obj, c| c.changed.iter().any(|p| module_of(&p.path) == obj),
                granularity,
            ))
        }
        Granularity::Chunk => {
            let git = snapshot.git();
            let in_window: BTreeSet<&str> = window.iter().map(|c| c.id.as_str()).collect();
            let mut touched_by: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
            for (path, text) in &sources {
                let Ok(Some(parsed)) = registry.parse(path, text) else {
                    continue;
                };
                for (_, def) in parsed.top_level() {
                    let id = chunk_id(path, def.start_line, def.end_line);
                    let history = if window.is_empty() {
                        Vec::new()
                    } else {
                        git.line_history(&snapshot.head, path, def.start_line, def.end_line)?
                    };
                    let ids = history
                        .into_iter()
                        .filter(|h| in_window.contains(h.as_str()))
                        .collect();
                    touched_by.insert(id, ids);
                }
            }
            Ok(count_touches(
                touched_by.keys().map(String::as_str),
                &window,
                |obj, c| touched_by.get(obj).is_some_and(|s| s.contains(&c.id)),
                granularity,
            ))
        }
    }
}

/// Anything carrying a provenance timestamp.
pub trait Provenanced {
    fn provenance_timestamp(&self) -> Option<i64>;
    fn label(&self) -> String;
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("instance {label} has no provenance timestamp")]
pub struct MissingProvenance {
    pub label: String,
}

/// Splits into (train, eval): train iff provenance is on or before the
/// cutoff day. Input order is preserved within each side.
pub fn temporal_split<T: Provenanced>(
    instances: Vec<T>,
    cutoff: &Cutoff,
) -> Result<(Vec<T>, Vec<T>), MissingProvenance> {
    if let Some(bad) = instances.iter().find(|i| i.provenance_timestamp().is_none()) {
        return Err(MissingProvenance { label: bad.label() });
    }
    let (train, eval) = instances.into_iter().partition(|i| {
        cutoff.admits(i.provenance_timestamp().expect("checked above"))
    });
    Ok((train, eval))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoCounts {
    pub name: String,
    /// Post-cutoff instance counts per task family.
    pub counts: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedRepo {
    pub name: String,
    pub total: u64,
    pub counts: BTreeMap<String, u64>,
}

/// Repositories by total post-cutoff instances, densest first; ties by name.
/// `top` truncates the ranking.
pub fn post_cutoff_density(repos: &[RepoCounts], top: Option<usize>) -> Vec<RankedRepo> {
    let mut ranked: Vec<RankedRepo> = repos
        .iter()
        .map(|r| RankedRepo {
            name: r.name.clone(),
            total: r.counts.values().sum(),
            counts: r.counts.clone(),
        })
        .collect();
    ranked.sort_by(|a, b| b.total.cmp(&a.total).then_with(|| a.name.cmp(&b.name)));
    ranked.truncate(top.unwrap_or(usize::MAX));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pr_patterns() {
        assert_eq!(
            parse_pr_reference("Merge pull request #42 from x/y\n\nFix things"),
            Some((42, PrStyle::Merge))
        );
        assert_eq!(parse_pr_reference("Fix caching (#43)"), Some((43, PrStyle::Squash)));
        assert_eq!(parse_pr_reference("update readme"), None);
        assert_eq!(parse_pr_reference("see #44 for details"), None);
    }

    #[test]
    fn titles() {
        let merge = CommitRecord {
            id: "m".into(),
            timestamp: 1,
            parents: vec!["a".into(), "b".into()],
            message: "Merge pull request #42 from x/y\n\nFix the parser".into(),
            changed: vec![],
        };
        assert_eq!(pr_title(&merge, PrStyle::Merge), "Fix the parser");
        let squash = CommitRecord {
            message: "Fix caching (#43)".into(),
            ..merge
        };
        assert_eq!(pr_title(&squash, PrStyle::Squash), "Fix caching");
    }

    fn commit(id: &str, ts: i64, paths: &[&str]) -> CommitRecord {
        CommitRecord {
            id: id.into(),
            timestamp: ts,
            parents: vec![],
            message: id.into(),
            changed: paths
                .iter()
                .map(|p| ChangedPath {
                    path: p.to_string(),
                    added: 1,
                    deleted: 0,
                })
                .collect(),
        }
    }

    fn file_heat(objects: &[&str], window: &[CommitRecord]) -> HeatMap {
        count_touches(
            objects.iter().copied(),
            window,
            |o, c| c.changed.iter().any(|p| p.path == o),
            Granularity::File,
        )
    }

    #[test]
    fn heat_counts_and_ranks() {
        let window = vec![
            commit("c4", 40, &["a"]),
            commit("c3", 30, &["a", "b"]),
            commit("c2", 20, &["a"]),
            commit("c1", 10, &["z"]),
        ];
        let heat = file_heat(&["a", "b", "c"], &window);
        assert_eq!(heat.score("a"), 3.0);
        assert_eq!(heat.score("b"), 1.0);
        assert_eq!(heat.score("c"), 0.0);
        let order: Vec<_> = heat.ranked().into_iter().map(|(k, _)| k).collect();
        assert_eq!(order, ["a", "b", "c"]);
        let empty = file_heat(&["a", "b"], &[]);
        assert!(empty.scores.values().all(|s| *s == 0.0));
    }

    #[test]
    fn heat_ties_break_by_recency_then_id() {
        let window = vec![commit("c2", 20, &["y"]), commit("c1", 10, &["x", "w"])];
        let heat = file_heat(&["w", "x", "y"], &window);
        let order: Vec<_> = heat.ranked().into_iter().map(|(k, _)| k).collect();
        assert_eq!(order, ["y", "w", "x"]);
    }

    #[test]
    fn window_respects_cutoff_and_lookback() {
        let cutoff: Cutoff = "1970-01-01".parse().unwrap();
        let commits = vec![commit("new", 200_000, &["a"]), commit("old", 100, &["a"]), commit("older", 50, &["a"])];
        let w = heat_window(&commits, &cutoff, None);
        assert_eq!(w.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), ["old", "older"]);
        assert_eq!(heat_window(&commits, &cutoff, Some(1)).len(), 1);
        assert!(heat_window(&commits, &cutoff, Some(0)).is_empty());
    }

    #[test]
    fn module_of_paths() {
        assert_eq!(module_of("a/b/c.py"), "a/b");
        assert_eq!(module_of("setup.py"), ".");
    }

    #[test]
    fn density_ranking() {
        let rc = |n: &str, c: u64| RepoCounts {
            name: n.into(),
            counts: BTreeMap::from([("replay".to_string(), c)]),
        };
        let ranked = post_cutoff_density(&[rc("r2", 3), rc("r1", 10)], None);
        assert_eq!(ranked.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), ["r1", "r2"]);
        let tied = post_cutoff_density(&[rc("b", 5), rc("a", 5)], None);
        assert_eq!(tied.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(post_cutoff_density(&[rc("b", 5), rc("a", 5)], Some(1)).len(), 1);
    }

    #[test]
    fn large_manifest_is_representable() {
        // 231 issue resolving + 211 test generation + 152 feature
        // implementation + 336 codebase QA eval instances over 7 repos
        let totals = [("issue", 231u64), ("testgen", 211), ("feature", 152), ("qa", 336)];
        let repos: Vec<RepoCounts> = (0..7)
            .map(|i| RepoCounts {
                name: format!("repo{i}"),
                counts: totals
                    .iter()
                    .map(|(k, t)| (k.to_string(), t / 7 + u64::from((i as u64) < t % 7)))
                    .collect(),
            })
            .collect();
        let ranked = post_cutoff_density(&repos, Some(7));
        assert_eq!(ranked.len(), 7);
        assert_eq!(ranked.iter().map(|r| r.total).sum::<u64>(), 231 + 211 + 152 + 336);
        let json = serde_json::to_string(&ranked).unwrap();
        let back: Vec<RankedRepo> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ranked);
    }

    struct Inst(Option<i64>);
    impl Provenanced for Inst {
        fn provenance_timestamp(&self) -> Option<i64> {
            self.0
        }
        fn label(&self) -> String {
            format!("{:?}", self.0)
        }
    }

    #[test]
    fn split_boundary() {
        let cutoff: Cutoff = "2020-12-31".parse().unwrap();
        let (train, eval) =
            temporal_split(vec![Inst(Some(1_609_459_199)), Inst(Some(1_609_459_200))], &cutoff).unwrap();
        assert_eq!(train.len(), 1);
        assert_eq!(eval.len(), 1);
        assert!(temporal_split(vec![Inst(Some(1)), Inst(None)], &cutoff).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_sound_partition(ts in proptest::collection::vec(0i64..2_000_000_000, 0..200)) {
            let cutoff: Cutoff = "2020-12-31".parse().unwrap();
            let n = ts.len();
            let (train, eval) = temporal_split(ts.iter().map(|t| Inst(Some(*t))).collect(), &cutoff).unwrap();
            prop_assert_eq!(train.len() + eval.len(), n);
            prop_assert!(train.iter().all(|i| i.0.unwrap() <= cutoff.end_of_day()));
            prop_assert!(eval.iter().all(|i| i.0.unwrap() > cutoff.end_of_day()));
        }

        #[test]
        fn heat_is_monotone(
            base in proptest::collection::vec(proptest::collection::vec(0usize..4, 0..4), 0..10),
            extra in proptest::collection::vec(0usize..4, 0..4),
        ) {
            let names = ["a", "b", "c", "d"];
            let mk = |i: usize, p: &Vec<usize>| {
                let paths: Vec<&str> = p.iter().map(|k| names[*k]).collect();
                commit(&format!("c{i}"), i as i64 + 1, &paths)
            };
            let window: Vec<CommitRecord> = base.iter().enumerate().map(|(i, p)| mk(i, p)).collect();
            let before = file_heat(&names, &window);
            let mut grown = window.clone();
            grown.insert(0, mk(99, &extra));
            let after = file_heat(&names, &grown);
            for n in names {
                prop_assert!(after.score(n) >= before.score(n));
            }
        }
    }
}
