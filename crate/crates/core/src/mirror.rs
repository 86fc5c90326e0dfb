//! PR mirroring: reintroduce a historical bug at head by reverting the
//! source part of its fixing pull request, find the tests that should
//! notice, and attach a problem statement.

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{self, apply_patch, ApplyReport, FileDiff};
use crate::index::RepoIndex;
use crate::layout::TestLayout;
use crate::miner::{MinerError, Provenance, PullRecord, RepoSnapshot};
use crate::syntax::DefKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// The reverse patch does not apply at head.
    Conflict,
    /// The PR changed nothing outside tests.
    EmptyPatch,
    BrokenBaseline,
    NoSignal,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Conflict => "conflict",
            Self::EmptyPatch => "empty_patch",
            Self::BrokenBaseline => "broken_baseline",
            Self::NoSignal => "no_signal",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BugStatus {
    Candidate,
    Validated,
    Rejected { reason: RejectReason },
    Unvalidatable { reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSource {
    LinkedIssue,
    Generated,
    Template,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemStatement {
    pub text: String,
    pub source: ProblemSource,
}

/// The parts of a PullRecord a bug keeps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRef {
    pub pr_number: Option<u64>,
    pub title: String,
    pub merge_commit: String,
    pub base_commit: String,
    pub merged_at: i64,
}

impl From<&PullRecord> for PullRef {
    fn from(pr: &PullRecord) -> Self {
        Self {
            pr_number: pr.pr_number,
            title: pr.title.clone(),
            merge_commit: pr.merge_commit.clone(),
            base_commit: pr.base_commit.clone(),
            merged_at: pr.merged_at,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirroredBug {
    pub id: String,
    pub source_pr: PullRef,
    /// Unified diff that turns head into the bugged tree.
    pub reverse_patch: String,
    pub apply_report: ApplyReport,
    pub problem_statement: ProblemStatement,
    pub test_subset: Vec<String>,
    /// Tests found beyond the cap.
    pub tests_overflow: usize,
    pub fail_to_pass: Vec<String>,
    pub status: BugStatus,
    pub bug_files: Vec<String>,
    pub provenance: Provenance,
}

impl MirroredBug {
    pub fn reverse_diffs(&self) -> Result<Vec<FileDiff>, diff::DiffParseError> {
        diff::parse_unified(&self.reverse_patch)
    }
}

pub fn bug_id(pr: &PullRecord) -> String {
    let short = &pr.merge_commit[..pr.merge_commit.len().min(10)];
    match pr.pr_number {
        Some(n) => format!("pr{n}-{short}"),
        None => format!("commit-{short}"),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReversePatch {
    /// Rendered realized patch; empty on conflict.
    pub text: String,
    pub report: ApplyReport,
    pub bug_files: Vec<String>,
}

/// Inverts the non-test part of `pr` and applies it in memory to the head
/// contents in `head` (`None` = file absent at head). The returned patch is
/// the change as it actually lands on head. Nothing on disk is touched.
pub fn build_reverse_patch_in(
    head: &BTreeMap<String, Option<String>>,
    pr: &PullRecord,
    fuzz: usize,
) -> ReversePatch {
    let reverse = diff::reverse(&pr.source_diff());
    if reverse.is_empty() {
        return ReversePatch {
            text: String::new(),
            report: ApplyReport::Conflict {
                path: String::new(),
                reason: "no non-test changes to revert".into(),
            },
            bug_files: Vec::new(),
        };
    }
    match apply_patch(head, &reverse, fuzz) {
        Ok(applied) => {
            let realized = applied.realized(head, 3);
            let bug_files = realized.iter().map(|d| d.path().to_string()).collect();
            ReversePatch {
                text: diff::render_unified(&realized),
                report: applied.report(),
                bug_files,
            }
        }
        Err(c) => ReversePatch {
            text: String::new(),
            report: ApplyReport::Conflict {
                path: c.path,
                reason: c.reason,
            },
            bug_files: Vec::new(),
        },
    }
}

/// Head contents of every path `pr` touches.
pub fn head_tree_for(snapshot: &RepoSnapshot, pr: &PullRecord) -> Result<BTreeMap<String, Option<String>>, MinerError> {
    let paths = pr.paths();
    let present = snapshot.read_files(&paths)?;
    Ok(paths
        .into_iter()
        .map(|p| {
            let c = present.get(&p).cloned();
            (p, c)
        })
        .collect())
}

pub fn build_reverse_patch(snapshot: &RepoSnapshot, pr: &PullRecord, fuzz: usize) -> Result<ReversePatch, MinerError> {
    Ok(build_reverse_patch_in(&head_tree_for(snapshot, pr)?, pr, fuzz))
}

/// Test identifiers defined in a parsed test file: `path::func` and
/// `path::Class::method`.
pub fn test_ids_in(index: &RepoIndex, layout: &TestLayout, path: &str) -> Vec<String> {
    let Some(file) = index.file(path) else {
        return Vec::new();
    };
    let mut ids = Vec::new();
    for (idx, def) in file.top_level() {
        match def.kind {
            DefKind::Function if layout.is_test_function(&def.name) => ids.push(format!("{path}::{}", def.name)),
            DefKind::Class if layout.is_test_class(&def.name) => {
                for (_, m) in file.children(idx) {
                    if m.kind == DefKind::Function && layout.is_test_function(&m.name) {
                        ids.push(format!("{path}::{}::{}", def.name, m.name));
                    }
                }
            }
            _ => {}
        }
    }
    ids
}

fn stem(path: &str) -> &str {
    let name = path.rsplit('/').next().unwrap_or(path);
    name.split_once('.').map_or(name, |(s, _)| s)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSelection {
    pub tests: Vec<String>,
    pub overflow: usize,
    /// Which rule first selected each test file.
    pub files: Vec<(String, u8)>,
}

/// Deterministic test finding. Files are taken in rule order: (1) test files
/// the PR touched, (2) test files whose import closure reaches a bug file,
/// (3) test files whose name mentions a bug file's stem. Test ids are
/// deduplicated and capped at `max_tests`.
pub fn find_tests(
    index: &RepoIndex,
    layout: &TestLayout,
    pr: &PullRecord,
    bug_files: &[String],
    max_tests: usize,
) -> TestSelection {
    let test_files: Vec<&String> = index
        .files()
        .map(|(p, _)| p)
        .filter(|p| layout.is_test_file(p))
        .collect();
    let bugs: BTreeSet<&str> = bug_files.iter().map(String::as_str).collect();
    let mut ordered: Vec<(String, u8)> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut add = |p: &str, rule: u8, ordered: &mut Vec<(String, u8)>| {
        if seen.insert(p.to_string()) {
            ordered.push((p.to_string(), rule));
        }
    };
    let mut touched: Vec<&String> = pr.touched_test_paths.iter().collect();
    touched.sort();
    for p in touched {
        if index.file(p).is_some() && layout.is_test_file(p) {
            add(p, 1, &mut ordered);
        }
    }
    for p in &test_files {
        if index.import_closure(p).iter().any(|f| bugs.contains(f.as_str())) {
            add(p, 2, &mut ordered);
        }
    }
    let stems: BTreeSet<&str> = bug_files
        .iter()
        .map(|b| stem(b))
        .filter(|s| !s.is_empty() && *s != "__init__")
        .collect();
    for p in &test_files {
        let name = p.rsplit('/').next().unwrap_or(p).to_lowercase();
        if name.contains("test") && stems.iter().any(|s| name.contains(&s.to_lowercase())) {
            add(p, 3, &mut ordered);
        }
    }
    let mut tests = Vec::new();
    let mut ids = BTreeSet::new();
    let mut overflow = 0;
    for (p, _) in &ordered {
        for id in test_ids_in(index, layout, p) {
            if !ids.insert(id.clone()) {
                continue;
            }
            if tests.len() < max_tests {
                tests.push(id);
            } else {
                overflow += 1;
            }
        }
    }
    TestSelection {
        tests,
        overflow,
        files: ordered,
    }
}

/// What a generator is told about a PR.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub title: String,
    pub files: Vec<String>,
    pub added: usize,
    pub deleted: usize,
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("generator could not run: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("generator timed out")]
    Timeout,
    #[error("generator failed: {0}")]
    Failed(String),
}

/// Single request, single text response.
pub trait TextGenerator {
    fn generate(&mut self, request: &GenerationRequest) -> Result<String, GeneratorError>;
}

/// Runs a command per request: the request as JSON on stdin, the problem
/// statement on stdout.
#[derive(Clone, Debug)]
pub struct SubprocessGenerator {
    pub command: Vec<String>,
    pub timeout: Duration,
}

impl TextGenerator for SubprocessGenerator {
    fn generate(&mut self, request: &GenerationRequest) -> Result<String, GeneratorError> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| GeneratorError::Failed("empty command".into()))?;
        let input = serde_json::to_vec(request).map_err(|e| GeneratorError::Failed(e.to_string()))?;
        let out = crate::process::run_with_timeout(Command::new(program).args(args), Some(&input), self.timeout)?;
        if out.timed_out() {
            return Err(GeneratorError::Timeout);
        }
        if !out.success() {
            return Err(GeneratorError::Failed(String::from_utf8_lossy(&out.stderr).trim().to_string()));
        }
        let text = String::from_utf8_lossy(&out.stdout).trim().to_string();
        if text.is_empty() {
            return Err(GeneratorError::Failed("empty output".into()));
        }
        Ok(text)
    }
}

/// Returns canned responses in order, or an error once exhausted.
#[derive(Clone, Debug, Default)]
pub struct MockGenerator {
    pub responses: Vec<Result<String, String>>,
    pub requests: Vec<GenerationRequest>,
}

impl MockGenerator {
    pub fn always(text: &str) -> Self {
        Self {
            responses: vec![Ok(text.to_string()); 1024],
            requests: Vec::new(),
        }
    }
}

impl TextGenerator for MockGenerator {
    fn generate(&mut self, request: &GenerationRequest) -> Result<String, GeneratorError> {
        self.requests.push(request.clone());
        if self.responses.is_empty() {
            return Err(GeneratorError::Failed("no response left".into()));
        }
        self.responses.remove(0).map_err(GeneratorError::Failed)
    }
}

pub fn template_statement(pr: &PullRecord) -> String {
    let mut text = format!("{}\n\nThe behavior described above is broken. Relevant files:\n", pr.title.trim());
    for d in pr.source_diff() {
        text.push_str(&format!("- {}\n", d.path()));
    }
    text
}

/// Linked issue text verbatim when present, else the generator's text, else
/// a template built from the PR title and changed files. A generator failure
/// falls back to the template and returns a diagnostic.
pub fn provision_problem_statement(
    pr: &PullRecord,
    generator: Option<&mut dyn TextGenerator>,
) -> (ProblemStatement, Option<String>) {
    if let Some(text) = &pr.linked_issue_text {
        return (
            ProblemStatement {
                text: text.clone(),
                source: ProblemSource::LinkedIssue,
            },
            None,
        );
    }
    let mut diagnostic = None;
    if let Some(g) = generator {
        let source = pr.source_diff();
        let request = GenerationRequest {
            title: pr.title.clone(),
            files: source.iter().map(|d| d.path().to_string()).collect(),
            added: source.iter().map(FileDiff::added).sum(),
            deleted: source.iter().map(FileDiff::deleted).sum(),
        };
        match g.generate(&request) {
            Ok(text) => {
                return (
                    ProblemStatement {
                        text,
                        source: ProblemSource::Generated,
                    },
                    None,
                )
            }
            Err(e) => diagnostic = Some(format!("{}: {e}; using template", bug_id(pr))),
        }
    }
    (
        ProblemStatement {
            text: template_statement(pr),
            source: ProblemSource::Template,
        },
        diagnostic,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub require_linked_issue: bool,
    pub require_test_patch: bool,
    pub max_changed_lines: usize,
}

impl FilterPolicy {
    pub fn strict() -> Self {
        Self {
            require_linked_issue: true,
            require_test_patch: true,
            max_changed_lines: 100,
        }
    }

    pub fn relaxed() -> Self {
        Self {
            require_linked_issue: false,
            require_test_patch: false,
            max_changed_lines: 2000,
        }
    }

    pub fn admits(&self, pr: &PullRecord) -> bool {
        (!self.require_linked_issue || pr.linked_issue_text.is_some())
            && (!self.require_test_patch || !pr.touched_test_paths.is_empty())
            && pr.total_changed_lines <= self.max_changed_lines
    }
}

pub fn apply_filter(prs: &[PullRecord], policy: &FilterPolicy) -> Vec<PullRecord> {
    prs.iter().filter(|p| policy.admits(p)).cloned().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YieldReport {
    pub strict_count: usize,
    pub relaxed_count: usize,
    pub ratio: f64,
}

pub fn yield_ratio(prs: &[PullRecord], strict: &FilterPolicy, relaxed: &FilterPolicy) -> YieldReport {
    let strict_count = prs.iter().filter(|p| strict.admits(p)).count();
    let relaxed_count = prs.iter().filter(|p| relaxed.admits(p)).count();
    YieldReport {
        strict_count,
        relaxed_count,
        ratio: relaxed_count as f64 / strict_count.max(1) as f64,
    }
}

/// Everything `mirror_pull` needs besides the PR.
pub struct MirrorContext<'a> {
    pub head: String,
    pub head_timestamp: i64,
    pub index: &'a RepoIndex,
    pub layout: &'a TestLayout,
    pub fuzz: usize,
    pub max_tests: usize,
}

/// Builds the candidate bug for one PR. The returned diagnostics mention
/// generator fallbacks.
pub fn mirror_pull(
    ctx: &MirrorContext<'_>,
    head_tree: &BTreeMap<String, Option<String>>,
    pr: &PullRecord,
    generator: Option<&mut dyn TextGenerator>,
) -> (MirroredBug, Option<String>) {
    let reverse = build_reverse_patch_in(head_tree, pr, ctx.fuzz);
    let (problem_statement, diagnostic) = provision_problem_statement(pr, generator);
    let (selection, status) = match &reverse.report {
        ApplyReport::Conflict { .. } => {
            let reason = if pr.source_diff().is_empty() {
                RejectReason::EmptyPatch
            } else {
                RejectReason::Conflict
            };
            (TestSelection::default(), BugStatus::Rejected { reason })
        }
        _ => {
            let s = find_tests(ctx.index, ctx.layout, pr, &reverse.bug_files, ctx.max_tests);
            let status = if s.tests.is_empty() {
                BugStatus::Unvalidatable {
                    reason: "no tests found".into(),
                }
            } else {
                BugStatus::Candidate
            };
            (s, status)
        }
    };
    let bug = MirroredBug {
        id: bug_id(pr),
        source_pr: pr.into(),
        reverse_patch: reverse.text,
        apply_report: reverse.report,
        problem_statement,
        test_subset: selection.tests,
        tests_overflow: selection.overflow,
        fail_to_pass: Vec::new(),
        status,
        bug_files: reverse.bug_files,
        provenance: Provenance::new([
            (pr.merge_commit.clone(), pr.merged_at),
            (ctx.head.clone(), ctx.head_timestamp),
        ]),
    };
    (bug, diagnostic)
}
