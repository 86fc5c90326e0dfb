//! Test execution over private checkouts, and the two validation semantics:
//! replayed-bug validation and reproduction-test evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::apply::ApplyError;
use crate::diff::{self, apply_to_dir, FileDiff};
use crate::git::{Git, GitError};
use crate::layout::TestLayout;
use crate::mirror::{BugStatus, MirroredBug, RejectReason};
use crate::process::run_with_timeout;
use crate::syntax::{DefKind, SyntaxRegistry};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(900);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
    Skip,
}

impl std::str::FromStr for TestStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pass" | "passed" | "ok" | "success" => Ok(Self::Pass),
            "fail" | "failed" | "failure" => Ok(Self::Fail),
            "error" | "errored" => Ok(Self::Error),
            "skip" | "skipped" => Ok(Self::Skip),
            other => Err(format!("unknown test status {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test_id: String,
    pub status: TestStatus,
    /// Seconds.
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    JunitXml,
    Tap,
    JsonLines,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "junit-xml" => Ok(Self::JunitXml),
            "tap" => Ok(Self::Tap),
            "json-lines" => Ok(Self::JsonLines),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid test command template {template:?}: {message}")]
    Template { template: String, message: String },
    #[error("cannot run {program}: {source}")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error("unrecognizable {format:?} test output ({} bytes)", raw.len())]
    AdapterParse { format: ReportFormat, raw: String },
    #[error("setup command {command:?} failed: {detail}")]
    Setup { command: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Git(#[from] GitError),
    #[error("invalid patch: {0}")]
    Patch(#[from] diff::DiffParseError),
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A test command template plus the format of its machine-readable output.
/// `{test_ids}` as a whole token expands to one argument per test; a
/// `{report}` slot names a file the runner writes its report to, otherwise
/// the report is read from stdout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerAdapter {
    pub template: String,
    pub format: ReportFormat,
    pub setup_commands: Vec<String>,
}

impl RunnerAdapter {
    pub fn new(template: &str, format: ReportFormat) -> Result<Self, HarnessError> {
        let adapter = Self {
            template: template.to_string(),
            format,
            setup_commands: Vec::new(),
        };
        adapter.tokens()?;
        Ok(adapter)
    }

    fn tokens(&self) -> Result<Vec<String>, HarnessError> {
        let tokens = shell_words::split(&self.template).map_err(|e| HarnessError::Template {
            template: self.template.clone(),
            message: e.to_string(),
        })?;
        if tokens.is_empty() {
            return Err(HarnessError::Template {
                template: self.template.clone(),
                message: "empty command".into(),
            });
        }
        Ok(tokens)
    }

    /// The argument vector for a run.
    pub fn argv(&self, test_ids: &[String], report: Option<&Path>) -> Result<Vec<String>, HarnessError> {
        let mut argv = Vec::new();
        for token in self.tokens()? {
            if token == "{test_ids}" {
                argv.extend(test_ids.iter().cloned());
            } else if token.contains("{report}") {
                let path = report.map(|p| p.display().to_string()).unwrap_or_default();
                argv.push(token.replace("{report}", &path));
            } else {
                argv.push(token);
            }
        }
        Ok(argv)
    }

    fn uses_report_file(&self) -> bool {
        self.template.contains("{report}")
    }
}

type Parsed = Vec<(String, TestStatus, f64, Option<String>)>;

fn junit_key(test_id: &str) -> Option<(String, String)> {
    let mut parts = test_id.split("::");
    let path = parts.next()?;
    let rest: Vec<&str> = parts.collect();
    let (name, classes) = rest.split_last()?;
    let mut classname = path.strip_suffix(".py").unwrap_or(path).replace('/', ".");
    for c in classes {
        classname.push('.');
        classname.push_str(c);
    }
    Some((classname, name.to_string()))
}

fn parse_junit(raw: &str, requested: &[String]) -> Option<Parsed> {
    let doc = roxmltree::Document::parse(raw).ok()?;
    let root_name = doc.root_element().tag_name().name();
    if root_name != "testsuites" && root_name != "testsuite" {
        return None;
    }
    let wanted: BTreeMap<(String, String), &String> = requested
        .iter()
        .filter_map(|id| junit_key(id).map(|k| (k, id)))
        .collect();
    let mut out = Vec::new();
    for case in doc.descendants().filter(|n| n.has_tag_name("testcase")) {
        let classname = case.attribute("classname").unwrap_or("").to_string();
        let name = case.attribute("name").unwrap_or("").to_string();
        let duration = case.attribute("time").and_then(|t| t.parse().ok()).unwrap_or(0.0);
        let child = |tag: &str| case.children().find(|c| c.has_tag_name(tag));
        let (status, message) = if let Some(c) = child("error") {
            (TestStatus::Error, c.attribute("message").map(str::to_string))
        } else if let Some(c) = child("failure") {
            (TestStatus::Fail, c.attribute("message").map(str::to_string))
        } else if child("skipped").is_some() {
            (TestStatus::Skip, None)
        } else {
            (TestStatus::Pass, None)
        };
        let id = match wanted.get(&(classname.clone(), name.clone())) {
            Some(id) => (*id).clone(),
            None => format!("{classname}::{name}"),
        };
        out.push((id, status, duration, message));
    }
    Some(out)
}

fn parse_tap(raw: &str) -> Option<Parsed> {
    let mut out = Vec::new();
    let mut recognized = false;
    for line in raw.lines().map(str::trim) {
        if line.starts_with("1..") || line.starts_with("TAP version") {
            recognized = true;
            continue;
        }
        let (ok, rest) = if let Some(r) = line.strip_prefix("not ok") {
            (false, r)
        } else if let Some(r) = line.strip_prefix("ok") {
            (true, r)
        } else {
            continue;
        };
        recognized = true;
        let rest = rest.trim_start().trim_start_matches(|c: char| c.is_ascii_digit()).trim_start();
        let rest = rest.strip_prefix('-').unwrap_or(rest).trim();
        let (desc, directive) = match rest.split_once(" # ") {
            Some((d, dir)) => (d.trim(), Some(dir.trim().to_ascii_uppercase())),
            None => (rest, None),
        };
        let skipped = directive
            .as_deref()
            .is_some_and(|d| d.starts_with("SKIP") || d.starts_with("TODO"));
        let status = match (ok, skipped) {
            (_, true) => TestStatus::Skip,
            (true, false) => TestStatus::Pass,
            (false, false) => TestStatus::Fail,
        };
        out.push((desc.to_string(), status, 0.0, None));
    }
    recognized.then_some(out)
}

fn parse_json_lines(raw: &str) -> Option<Parsed> {
    let mut out = Vec::new();
    for line in raw.lines().map(str::trim).filter(|l| l.starts_with('{')) {
        let Ok(v) = serde_json::from_str::<serde_json::Value>(line) else {
            continue;
        };
        let id = ["test_id", "id", "nodeid"].iter().find_map(|k| v[*k].as_str());
        let status = ["status", "outcome"]
            .iter()
            .find_map(|k| v[*k].as_str())
            .and_then(|s| s.parse::<TestStatus>().ok());
        let (Some(id), Some(status)) = (id, status) else {
            continue;
        };
        let duration = v["duration"].as_f64().unwrap_or(0.0);
        let message = v["message"].as_str().map(str::to_string);
        out.push((id.to_string(), status, duration, message));
    }
    (!out.is_empty()).then_some(out)
}

/// Parses a runner report into one outcome per requested test, in request
/// order. Requested tests absent from the report are errors.
pub fn parse_report(format: ReportFormat, raw: &str, requested: &[String]) -> Result<Vec<TestOutcome>, HarnessError> {
    let parsed = match format {
        ReportFormat::JunitXml => parse_junit(raw, requested),
        ReportFormat::Tap => parse_tap(raw),
        ReportFormat::JsonLines => parse_json_lines(raw),
    }
    .ok_or_else(|| HarnessError::AdapterParse {
        format,
        raw: raw.to_string(),
    })?;
    let mut by_id: BTreeMap<String, TestOutcome> = BTreeMap::new();
    for (id, status, duration, message) in parsed {
        by_id.entry(id.clone()).or_insert(TestOutcome {
            test_id: id,
            status,
            duration,
            message,
        });
    }
    Ok(requested
        .iter()
        .map(|id| {
            by_id.get(id).cloned().unwrap_or(TestOutcome {
                test_id: id.clone(),
                status: TestStatus::Error,
                duration: 0.0,
                message: Some("not reported by runner".into()),
            })
        })
        .collect())
}

/// Runs `test_ids` in `workdir`. Nothing is spawned for an empty list. On
/// timeout every requested test is an error.
pub fn run_tests(
    workdir: &Path,
    test_ids: &[String],
    adapter: &RunnerAdapter,
    timeout: Duration,
) -> Result<Vec<TestOutcome>, HarnessError> {
    if test_ids.is_empty() {
        return Ok(Vec::new());
    }
    let report = if adapter.uses_report_file() {
        Some(tempfile::NamedTempFile::new().map_err(io_at(workdir))?.into_temp_path())
    } else {
        None
    };
    let argv = adapter.argv(test_ids, report.as_deref())?;
    let (program, args) = argv.split_first().expect("non-empty argv");
    let out = run_with_timeout(Command::new(program).args(args).current_dir(workdir), None, timeout).map_err(|source| {
        HarnessError::Spawn {
            program: program.clone(),
            source,
        }
    })?;
    if out.timed_out() {
        let each = out.elapsed.as_secs_f64();
        return Ok(test_ids
            .iter()
            .map(|id| TestOutcome {
                test_id: id.clone(),
                status: TestStatus::Error,
                duration: each,
                message: Some("timeout".into()),
            })
            .collect());
    }
    let raw = match &report {
        Some(path) => std::fs::read_to_string(path).unwrap_or_default(),
        None => String::from_utf8_lossy(&out.stdout).into_owned(),
    };
    parse_report(adapter.format, &raw, test_ids).map_err(|e| match e {
        HarnessError::AdapterParse { format, raw } => HarnessError::AdapterParse {
            format,
            raw: format!("{raw}{}", String::from_utf8_lossy(&out.stderr)),
        },
        other => other,
    })
}

/// Where and how checkouts are made.
#[derive(Clone, Debug)]
pub struct HarnessOptions {
    pub workroot: PathBuf,
    pub timeout: Duration,
    /// Keep checkouts of jobs that did not succeed.
    pub retain_failed: bool,
}

impl HarnessOptions {
    pub fn new(workroot: impl Into<PathBuf>) -> Self {
        Self {
            workroot: workroot.into(),
            timeout: DEFAULT_TIMEOUT,
            retain_failed: false,
        }
    }
}

/// A private tree under `<workroot>/<job>/<name>`.
fn prepare_checkout(
    git: &Git,
    head: &str,
    dir: &Path,
    adapter: &RunnerAdapter,
    patches: &[&[FileDiff]],
    timeout: Duration,
) -> Result<Result<(), ApplyError>, HarnessError> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(io_at(dir))?;
    }
    git.export_tree(head, dir)?;
    for p in patches {
        if let Err(e) = apply_to_dir(dir, p, 0) {
            return Ok(Err(e));
        }
    }
    for command in &adapter.setup_commands {
        let out = run_with_timeout(Command::new("sh").args(["-c", command]).current_dir(dir), None, timeout)
            .map_err(io_at(dir))?;
        if !out.success() {
            let detail = if out.timed_out() {
                "timed out".to_string()
            } else {
                String::from_utf8_lossy(&out.stderr).trim().to_string()
            };
            return Err(HarnessError::Setup {
                command: command.clone(),
                detail,
            });
        }
    }
    Ok(Ok(()))
}

fn finish(job_dir: &Path, succeeded: bool, opts: &HarnessOptions) {
    if succeeded || !opts.retain_failed {
        let _ = std::fs::remove_dir_all(job_dir);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub bug_id: String,
    /// Clean-tree outcomes of the tests kept for validation.
    pub clean_run: Vec<TestOutcome>,
    /// Tests dropped because they errored on the clean tree.
    pub excluded: Vec<TestOutcome>,
    pub bugged_run: Vec<TestOutcome>,
    pub verdict: BugStatus,
    pub fail_to_pass: Vec<String>,
}

/// The verdict as a pure function of the two runs. Returns (kept clean
/// outcomes, excluded outcomes, verdict, fail_to_pass).
pub fn judge(
    clean: &[TestOutcome],
    bugged: &[TestOutcome],
) -> (Vec<TestOutcome>, Vec<TestOutcome>, BugStatus, Vec<String>) {
    let (excluded, kept): (Vec<TestOutcome>, Vec<TestOutcome>) =
        clean.iter().cloned().partition(|o| o.status == TestStatus::Error);
    if kept.iter().any(|o| o.status == TestStatus::Fail) {
        let v = BugStatus::Rejected {
            reason: RejectReason::BrokenBaseline,
        };
        return (kept, excluded, v, Vec::new());
    }
    if kept.is_empty() {
        let v = BugStatus::Unvalidatable {
            reason: "every selected test errors on the clean tree".into(),
        };
        return (kept, excluded, v, Vec::new());
    }
    let bugged_status: BTreeMap<&str, TestStatus> = bugged.iter().map(|o| (o.test_id.as_str(), o.status)).collect();
    let fail_to_pass: Vec<String> = kept
        .iter()
        .filter(|o| o.status == TestStatus::Pass && bugged_status.get(o.test_id.as_str()) == Some(&TestStatus::Fail))
        .map(|o| o.test_id.clone())
        .collect();
    let verdict = if fail_to_pass.is_empty() {
        BugStatus::Rejected {
            reason: RejectReason::NoSignal,
        }
    } else {
        BugStatus::Validated
    };
    (kept, excluded, verdict, fail_to_pass)
}

/// Runs the bug's test subset on a clean head checkout and on a checkout
/// with the reverse patch applied.
pub fn validate_bug(
    bug: &MirroredBug,
    git: &Git,
    head: &str,
    adapter: &RunnerAdapter,
    opts: &HarnessOptions,
) -> Result<ValidationReport, HarnessError> {
    let report = |verdict, clean_run, excluded, bugged_run, fail_to_pass| ValidationReport {
        bug_id: bug.id.clone(),
        clean_run,
        excluded,
        bugged_run,
        verdict,
        fail_to_pass,
    };
    if bug.apply_report.is_conflict() {
        let reason = match &bug.status {
            BugStatus::Rejected { reason } => *reason,
            _ => RejectReason::Conflict,
        };
        return Ok(report(BugStatus::Rejected { reason }, vec![], vec![], vec![], vec![]));
    }
    if bug.test_subset.is_empty() {
        let v = BugStatus::Unvalidatable {
            reason: "no tests found".into(),
        };
        return Ok(report(v, vec![], vec![], vec![], vec![]));
    }
    let reverse = bug.reverse_diffs()?;
    let job = opts.workroot.join(&bug.id);
    let result = (|| {
        let clean_dir = job.join("clean");
        prepare_checkout(git, head, &clean_dir, adapter, &[], opts.timeout)?.map_err(|e| HarnessError::Setup {
            command: "checkout".into(),
            detail: e.to_string(),
        })?;
        let clean = run_tests(&clean_dir, &bug.test_subset, adapter, opts.timeout)?;
        let (kept, excluded, verdict, _) = judge(&clean, &[]);
        // with no bugged run yet, only a broken or empty baseline is final
        if matches!(
            verdict,
            BugStatus::Rejected {
                reason: RejectReason::BrokenBaseline
            } | BugStatus::Unvalidatable { .. }
        ) {
            return Ok(report(verdict, kept, excluded, vec![], vec![]));
        }
        let bugged_dir = job.join("bugged");
        if prepare_checkout(git, head, &bugged_dir, adapter, &[&reverse], opts.timeout)?.is_err() {
            let v = BugStatus::Rejected {
                reason: RejectReason::Conflict,
            };
            return Ok(report(v, kept, excluded, vec![], vec![]));
        }
        let ids: Vec<String> = kept.iter().map(|o| o.test_id.clone()).collect();
        let bugged = run_tests(&bugged_dir, &ids, adapter, opts.timeout)?;
        let (kept, _, verdict, ftp) = judge(&kept, &bugged);
        Ok(report(verdict, kept, excluded, bugged, ftp))
    })();
    let ok = matches!(&result, Ok(r) if r.verdict == BugStatus::Validated);
    finish(&job, ok, opts);
    result
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReproRejection {
    TouchesSource,
    NoTests,
    PatchDoesNotApply,
    BrokenOnClean,
    FailsOnClean,
    NoRepro,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ReproVerdict {
    Accepted { failing_on_bugged: Vec<String> },
    Rejected { reason: ReproRejection },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproReport {
    pub bug_id: String,
    pub candidate_tests: Vec<String>,
    pub clean_run: Vec<TestOutcome>,
    pub bugged_run: Vec<TestOutcome>,
    pub verdict: ReproVerdict,
}

/// Test functions in the patched files whose line span contains an added
/// line.
fn candidate_tests(dir: &Path, patch: &[FileDiff], layout: &TestLayout, registry: &SyntaxRegistry) -> Vec<String> {
    let mut ids = Vec::new();
    for fd in patch.iter().filter(|d| d.new_path.is_some()) {
        let path = fd.path();
        let added: BTreeSet<usize> = fd.hunks.iter().flat_map(|h| h.added_new_lines()).collect();
        let Ok(text) = std::fs::read_to_string(dir.join(path)) else {
            continue;
        };
        let Ok(Some(parsed)) = registry.parse(path, &text) else {
            continue;
        };
        let hit = |s: usize, e: usize| added.range(s..=e).next().is_some();
        for (idx, def) in parsed.top_level() {
            match def.kind {
                DefKind::Function if layout.is_test_function(&def.name) && hit(def.start_line, def.end_line) => {
                    ids.push(format!("{path}::{}", def.name))
                }
                DefKind::Class if layout.is_test_class(&def.name) => {
                    for (_, m) in parsed.children(idx) {
                        if m.kind == DefKind::Function && layout.is_test_function(&m.name) && hit(m.start_line, m.end_line) {
                            ids.push(format!("{path}::{}::{}", def.name, m.name));
                        }
                    }
                }
                _ => {}
            }
        }
    }
    ids
}

/// Accepted iff the tests the candidate adds or edits all pass on the clean
/// tree and at least one fails with the bug applied.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_repro_test(
    candidate_patch: &str,
    bug: &MirroredBug,
    git: &Git,
    head: &str,
    adapter: &RunnerAdapter,
    layout: &TestLayout,
    registry: &SyntaxRegistry,
    opts: &HarnessOptions,
) -> Result<ReproReport, HarnessError> {
    let mut report = ReproReport {
        bug_id: bug.id.clone(),
        candidate_tests: Vec::new(),
        clean_run: Vec::new(),
        bugged_run: Vec::new(),
        verdict: ReproVerdict::Rejected {
            reason: ReproRejection::PatchDoesNotApply,
        },
    };
    let reject = |mut r: ReproReport, reason| {
        r.verdict = ReproVerdict::Rejected { reason };
        Ok(r)
    };
    let Ok(patch) = diff::parse_unified(candidate_patch) else {
        return reject(report, ReproRejection::PatchDoesNotApply);
    };
    if patch.is_empty() {
        return reject(report, ReproRejection::NoTests);
    }
    if patch.iter().flat_map(|d| d.paths()).any(|p| !layout.is_test_path(p)) {
        return reject(report, ReproRejection::TouchesSource);
    }
    let reverse = bug.reverse_diffs()?;
    let job = opts.workroot.join(format!("{}-repro", bug.id));
    let result = (|| {
        let clean_dir = job.join("clean");
        if prepare_checkout(git, head, &clean_dir, adapter, &[&patch], opts.timeout)?.is_err() {
            return reject(report, ReproRejection::PatchDoesNotApply);
        }
        report.candidate_tests = candidate_tests(&clean_dir, &patch, layout, registry);
        if report.candidate_tests.is_empty() {
            return reject(report, ReproRejection::NoTests);
        }
        report.clean_run = run_tests(&clean_dir, &report.candidate_tests, adapter, opts.timeout)?;
        if report.clean_run.iter().any(|o| o.status == TestStatus::Error) {
            return reject(report, ReproRejection::BrokenOnClean);
        }
        if report.clean_run.iter().any(|o| o.status == TestStatus::Fail) {
            return reject(report, ReproRejection::FailsOnClean);
        }
        let bugged_dir = job.join("bugged");
        if prepare_checkout(git, head, &bugged_dir, adapter, &[&reverse, &patch], opts.timeout)?.is_err() {
            return reject(report, ReproRejection::PatchDoesNotApply);
        }
        report.bugged_run = run_tests(&bugged_dir, &report.candidate_tests, adapter, opts.timeout)?;
        let failing: Vec<String> = report
            .bugged_run
            .iter()
            .filter(|o| o.status == TestStatus::Fail)
            .map(|o| o.test_id.clone())
            .collect();
        if failing.is_empty() {
            return reject(report, ReproRejection::NoRepro);
        }
        report.verdict = ReproVerdict::Accepted {
            failing_on_bugged: failing,
        };
        Ok(report)
    })();
    let ok = matches!(&result, Ok(r) if matches!(r.verdict, ReproVerdict::Accepted { .. }));
    finish(&job, ok, opts);
    result
}

type Job = Box<dyn FnOnce() + Send>;

/// Bounded pool of worker threads with a submit/await contract.
pub struct WorkerPool {
    sender: Option<mpsc::Sender<Job>>,
    workers: Vec<std::thread::JoinHandle<()>>,
}

pub struct JobHandle<T> {
    rx: mpsc::Receiver<std::thread::Result<T>>,
}

impl<T> JobHandle<T> {
    /// Blocks until the job finishes; a panicking job re-panics here.
    pub fn wait(self) -> T {
        match self.rx.recv().expect("worker pool dropped a job") {
            Ok(v) => v,
            Err(p) => std::panic::resume_unwind(p),
        }
    }
}

impl WorkerPool {
    pub fn new(size: usize) -> Self {
        let (sender, receiver) = mpsc::channel::<Job>();
        let receiver = Arc::new(Mutex::new(receiver));
        let workers = (0..size.max(1))
            .map(|_| {
                let rx = Arc::clone(&receiver);
                std::thread::spawn(move || loop {
                    let job = rx.lock().unwrap_or_else(|e| e.into_inner()).recv();
                    match job {
                        Ok(job) => job(),
                        Err(_) => break,
                    }
                })
            })
            .collect();
        Self {
            sender: Some(sender),
            workers,
        }
    }

    pub fn submit<T: Send + 'static>(&self, f: impl FnOnce() -> T + Send + 'static) -> JobHandle<T> {
        let (tx, rx) = mpsc::channel();
        let job: Job = Box::new(move || {
            let _ = tx.send(std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)));
        });
        self.sender
            .as_ref()
            .expect("pool is open")
            .send(job)
            .expect("workers alive");
        JobHandle { rx }
    }

    pub fn size(&self) -> usize {
        self.workers.len()
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.sender.take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUNNER: &str = r#"
import json, sys, time
results = {"t::a": "pass", "t::b": "pass", "t::c": "fail", "t::slow": "slow"}
for tid in sys.argv[1:]:
    r = results.get(tid, "missing")
    if r == "slow":
        time.sleep(30)
    if r != "missing":
        print(json.dumps({"test_id": tid, "status": r, "duration": 0.01}))
"#;

    fn adapter(dir: &Path) -> RunnerAdapter {
        std::fs::write(dir.join("run.py"), RUNNER).unwrap();
        RunnerAdapter::new("python3 run.py {test_ids}", ReportFormat::JsonLines).unwrap()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn runs_and_parses_json_lines() {
        let dir = tempfile::tempdir().unwrap();
        let a = adapter(dir.path());
        let out = run_tests(dir.path(), &ids(&["t::a", "t::b", "t::c", "t::zzz"]), &a, Duration::from_secs(30)).unwrap();
        let st: Vec<_> = out.iter().map(|o| o.status).collect();
        assert_eq!(st, [TestStatus::Pass, TestStatus::Pass, TestStatus::Fail, TestStatus::Error]);
        assert_eq!(out[3].message.as_deref(), Some("not reported by runner"));
    }

    #[test]
    fn empty_ids_spawn_nothing() {
        let a = RunnerAdapter::new("/nonexistent/runner {test_ids}", ReportFormat::Tap).unwrap();
        assert!(run_tests(Path::new("/"), &[], &a, Duration::from_secs(1)).unwrap().is_empty());
    }

    #[test]
    fn timeout_marks_everything_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = adapter(dir.path());
        let out = run_tests(dir.path(), &ids(&["t::a", "t::slow"]), &a, Duration::from_millis(1)).unwrap();
        assert!(out.iter().all(|o| o.status == TestStatus::Error && o.message.as_deref() == Some("timeout")));
    }

    #[test]
    fn unrecognizable_output_keeps_raw() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunnerAdapter::new("echo garbage here", ReportFormat::JsonLines).unwrap();
        match run_tests(dir.path(), &ids(&["x"]), &a, Duration::from_secs(5)) {
            Err(HarnessError::AdapterParse { raw, .. }) => assert!(raw.contains("garbage here")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn report_file_slot() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunnerAdapter::new(
            r#"sh -c 'printf "1..2\nok 1 - t::a\nnot ok 2 - t::b # SKIP later\n" > "$0"' {report}"#,
            ReportFormat::Tap,
        )
        .unwrap();
        let out = run_tests(dir.path(), &ids(&["t::a", "t::b"]), &a, Duration::from_secs(5)).unwrap();
        assert_eq!(out[0].status, TestStatus::Pass);
        assert_eq!(out[1].status, TestStatus::Skip);
    }

    #[test]
    fn tap_parsing() {
        let raw = "TAP version 13\n1..3\nok 1 - a::x\nnot ok 2 - a::y\nok 3 a::z # skip no db\n";
        let out = parse_report(ReportFormat::Tap, raw, &ids(&["a::x", "a::y", "a::z"])).unwrap();
        let st: Vec<_> = out.iter().map(|o| o.status).collect();
        assert_eq!(st, [TestStatus::Pass, TestStatus::Fail, TestStatus::Skip]);
        assert!(parse_report(ReportFormat::Tap, "hello\n", &ids(&["a"])).is_err());
    }

    #[test]
    fn junit_parsing() {
        let raw = r#"<?xml version="1.0"?>
<testsuites><testsuite name="pytest" tests="4">
  <testcase classname="tests.test_cache" name="test_get" time="0.5"/>
  <testcase classname="tests.test_cache.TestPut" name="test_put" time="0.1"><failure message="boom"/></testcase>
  <testcase classname="tests.test_cache" name="test_err"><error message="import"/></testcase>
  <testcase classname="tests.test_cache" name="test_skip"><skipped/></testcase>
</testsuite></testsuites>"#;
        let req = ids(&[
            "tests/test_cache.py::test_get",
            "tests/test_cache.py::TestPut::test_put",
            "tests/test_cache.py::test_err",
            "tests/test_cache.py::test_skip",
        ]);
        let out = parse_report(ReportFormat::JunitXml, raw, &req).unwrap();
        let st: Vec<_> = out.iter().map(|o| o.status).collect();
        assert_eq!(st, [TestStatus::Pass, TestStatus::Fail, TestStatus::Error, TestStatus::Skip]);
        assert_eq!(out[0].duration, 0.5);
        assert_eq!(out[1].message.as_deref(), Some("boom"));
        assert!(parse_report(ReportFormat::JunitXml, "<html/>", &req).is_err());
    }

    fn o(id: &str, s: TestStatus) -> TestOutcome {
        TestOutcome {
            test_id: id.into(),
            status: s,
            duration: 0.0,
            message: None,
        }
    }

    #[test]
    fn verdicts() {
        use TestStatus::*;
        let clean = [o("a", Pass), o("b", Pass), o("c", Skip)];
        let (_, _, v, ftp) = judge(&clean, &[o("a", Fail), o("b", Fail), o("c", Skip)]);
        assert_eq!((v, ftp), (BugStatus::Validated, ids(&["a", "b"])));
        let (_, _, v, _) = judge(&clean, &[o("a", Pass), o("b", Pass), o("c", Skip)]);
        assert_eq!(v, BugStatus::Rejected { reason: RejectReason::NoSignal });
        let (_, _, v, _) = judge(&[o("a", Pass), o("b", Fail)], &[o("a", Fail)]);
        assert_eq!(v, BugStatus::Rejected { reason: RejectReason::BrokenBaseline });
        let (kept, excluded, v, ftp) = judge(&[o("a", Pass), o("e", Error)], &[o("a", Fail)]);
        assert_eq!(v, BugStatus::Validated);
        assert_eq!(ftp, ids(&["a"]));
        assert_eq!((kept.len(), excluded.len()), (1, 1));
        let (_, _, v, _) = judge(&[o("e", Error)], &[]);
        assert!(matches!(v, BugStatus::Unvalidatable { .. }));
    }

    #[test]
    fn pool_runs_jobs() {
        let pool = WorkerPool::new(3);
        let handles: Vec<_> = (0..10u64).map(|i| pool.submit(move || i * i)).collect();
        let results: Vec<u64> = handles.into_iter().map(JobHandle::wait).collect();
        assert_eq!(results, (0..10u64).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(pool.size(), 3);
    }
}
