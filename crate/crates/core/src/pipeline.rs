//! Pipeline stages over a configured repository. Every stage reads its
//! inputs from and writes its outputs to `<output_dir>/stages`, so stages
//! can run one by one or all together with the same result.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};
use crate::cutoff::Cutoff;
use crate::design::{enumerate_objects_in, sample_design_targets, DesignTask, DesignTemplate, TemplateError};
use crate::fim::lsp::LspResolver;
use crate::fim::resolve::ResolveError;
use crate::fim::{classify_all, enumerate_holes_in, make_fim_task, select_holes, ClassifiedHole, Classification, FimTask, Resolver, ResolverPool};
use crate::forge::{self, assemble_with_align, emit_dataset, EmitError, EnvSpec, Manifest, RepoRef, TaskInstance};
use crate::harness::{evaluate_repro_test, validate_bug, HarnessError, HarnessOptions, ReproReport, ValidationReport, WorkerPool};
use crate::index::RepoIndex;
use crate::miner::{commit_heat, mine_commits, mine_pulls, CommitRecord, Granularity, HeatMap, IssueStore, MinerError, PullRecord, RepoSnapshot};
use crate::mirror::{apply_filter, head_tree_for, mirror_pull, yield_ratio, BugStatus, FilterPolicy, MirrorContext, MirroredBug, SubprocessGenerator, TextGenerator, YieldReport};
use crate::syntax::{SyntaxError, SyntaxRegistry};

pub const STAGE_DIR: &str = "stages";
pub const DATASET_DIR: &str = "dataset";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Mine,
    SampleDesign,
    SampleFim,
    MirrorBugs,
    Validate,
    MakeAlign,
    Emit,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Mine,
        Stage::SampleDesign,
        Stage::SampleFim,
        Stage::MirrorBugs,
        Stage::Validate,
        Stage::MakeAlign,
        Stage::Emit,
    ];
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing stage artifact {}; run `{stage}` first", .path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {source}", .path.display())]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error("unknown bug {0}")]
    UnknownBug(String),
}

impl PipelineError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 1,
        }
    }
}

type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// What `mine` learned about the repository; later stages start from it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineSummary {
    pub repo_name: String,
    pub head: String,
    pub head_timestamp: i64,
    pub cutoff: Cutoff,
    pub commits: usize,
    pub pulls: usize,
    pub skipped_commits: usize,
    pub granularities: Vec<Granularity>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FimReport {
    pub candidates: usize,
    pub positives: usize,
    pub negatives: usize,
    pub selected_positive: usize,
    pub selected_negative: usize,
    pub resolver_timeouts: usize,
    pub skipped_files: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MirrorReport {
    pub pulls: usize,
    pub admitted: usize,
    pub mirrored: usize,
    pub statuses: BTreeMap<String, usize>,
    pub diagnostics: Vec<String>,
    pub yield_report: YieldReport,
}

/// Stage runner bound to one validated configuration.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub registry: SyntaxRegistry,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for i in items {
        text.push_str(&forge::canonical_json(i));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|source| PipelineError::Json {
                path: path.to_path_buf(),
                line: n + 1,
                source,
            })
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let v = serde_json::to_value(value).expect("serializable");
    let text = serde_json::to_string_pretty(&v).expect("serializable") + "\n";
    std::fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        line: source.line(),
        source,
    })
}

fn status_key(s: &BugStatus) -> String {
    match s {
        BugStatus::Candidate => "candidate".into(),
        BugStatus::Validated => "validated".into(),
        BugStatus::Rejected { reason } => format!("rejected:{reason}"),
        BugStatus::Unvalidatable { .. } => "unvalidatable".into(),
    }
}

/// Newest first; ties by merge commit.
fn newest_first(prs: &mut [PullRecord]) {
    prs.sort_by(|a, b| b.merged_at.cmp(&a.merged_at).then_with(|| a.merge_commit.cmp(&b.merge_commit)));
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            config,
            registry: SyntaxRegistry::default(),
        }
    }

    pub fn stage_dir(&self) -> PathBuf {
        self.config.output_dir.join(STAGE_DIR)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.config.output_dir.join(DATASET_DIR)
    }

    fn stage_file(&self, name: &str) -> PathBuf {
        self.stage_dir().join(name)
    }

    fn require(&self, name: &str, stage: &'static str) -> Result<PathBuf> {
        let path = self.stage_file(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(PipelineError::MissingArtifact { path, stage })
        }
    }

    fn ensure_stage_dir(&self) -> Result<()> {
        let dir = self.stage_dir();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))
    }

    fn summary(&self) -> Result<MineSummary> {
        read_json(&self.require("mine.json", "mine")?)
    }

    /// Snapshot at the head recorded by `mine`.
    fn snapshot(&self, summary: &MineSummary) -> Result<RepoSnapshot> {
        Ok(RepoSnapshot::open(&self.config.repo, &summary.head, self.config.cutoff)?)
    }

    fn repo_ref(&self, summary: &MineSummary) -> RepoRef {
        RepoRef {
            name: summary.repo_name.clone(),
            head: summary.head.clone(),
        }
    }

    fn env_spec(&self, summary: &MineSummary) -> EnvSpec {
        EnvSpec {
            base_commit: summary.head.clone(),
            setup_commands: self.config.env.setup_commands.clone(),
            test_command_template: self.config.env.test_command.clone(),
        }
    }

    fn harness_options(&self) -> HarnessOptions {
        HarnessOptions {
            workroot: self.config.workroot(),
            timeout: Duration::from_secs_f64(self.config.harness.timeout_secs),
            retain_failed: self.config.harness.retain_failed,
        }
    }

    fn index(&self, snapshot: &RepoSnapshot) -> Result<RepoIndex> {
        let sources = snapshot.source_files(&self.registry)?;
        Ok(RepoIndex::build(sources, &self.registry, &self.config.layout.source_roots))
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Mine => self.mine().map(drop),
            Stage::SampleDesign => self.sample_design().map(drop),
            Stage::SampleFim => self.sample_fim().map(drop),
            Stage::MirrorBugs => self.mirror_bugs().map(drop),
            Stage::Validate => self.validate().map(drop),
            Stage::MakeAlign => self.make_align().map(drop),
            Stage::Emit => self.emit().map(drop),
        }
    }

    pub fn run_all(&self) -> Result<Manifest> {
        for stage in &Stage::ALL[..Stage::ALL.len() - 1] {
            self.run(*stage)?;
        }
        self.emit()
    }

    /// Commit history, PR records and heat maps.
    pub fn mine(&self) -> Result<MineSummary> {
        let cfg = &self.config;
        let snapshot = RepoSnapshot::open(&cfg.repo, &cfg.head, cfg.cutoff)?;
        self.ensure_stage_dir()?;
        let commits = mine_commits(&snapshot, None)?;
        let issues = cfg.mirror.issue_store.as_ref().map(IssueStore::new);
        let pulls = mine_pulls(&snapshot, &commits, &cfg.layout(), issues.as_ref())?;
        write_jsonl(&self.stage_file("commits.jsonl"), &commits)?;
        write_jsonl(&self.stage_file("pulls.jsonl"), &pulls.pulls)?;
        for g in &cfg.design.granularities {
            let heat = commit_heat(&snapshot, &commits, *g, cfg.design.lookback, &self.registry)?;
            write_json(&self.stage_file(&format!("heat_{g}.json")), &heat)?;
        }
        let summary = MineSummary {
            repo_name: snapshot.name(),
            head: snapshot.head.clone(),
            head_timestamp: snapshot.head_timestamp,
            cutoff: cfg.cutoff,
            commits: commits.len(),
            pulls: pulls.pulls.len(),
            skipped_commits: pulls.skipped,
            granularities: cfg.design.granularities.clone(),
        };
        write_json(&self.stage_file("mine.json"), &summary)?;
        log::info!("mined {} commits, {} pull requests at {}", commits.len(), pulls.pulls.len(), &summary.head[..12]);
        Ok(summary)
    }

    pub fn commits(&self) -> Result<Vec<CommitRecord>> {
        read_jsonl(&self.require("commits.jsonl", "mine")?)
    }

    pub fn pulls(&self) -> Result<Vec<PullRecord>> {
        read_jsonl(&self.require("pulls.jsonl", "mine")?)
    }

    /// Heat-weighted design targets pooled over the configured granularities.
    pub fn sample_design(&self) -> Result<Vec<DesignTask>> {
        let cfg = &self.config;
        let summary = self.summary()?;
        let snapshot = self.snapshot(&summary)?;
        let template = match &cfg.design.template_file {
            Some(p) => DesignTemplate::new(std::fs::read_to_string(p).map_err(io_err(p))?)?,
            None => DesignTemplate::default(),
        };
        let sources = snapshot.source_files(&self.registry)?;
        let mut objects = Vec::new();
        for g in &cfg.design.granularities {
            let heat: HeatMap = read_json(&self.require(&format!("heat_{g}.json"), "mine")?)?;
            let scan = enumerate_objects_in(&sources, *g, &heat, cfg.design.min_chunk_lines, &self.registry);
            for (path, reason) in &scan.skipped {
                log::warn!("design: skipped {path}: {reason}");
            }
            objects.extend(scan.objects);
        }
        let tasks = sample_design_targets(&objects, cfg.budgets.design, cfg.seed(), &template, &snapshot.head_provenance());
        write_jsonl(&self.stage_file("design.jsonl"), &tasks)?;
        log::info!("design: {} targets from {} objects", tasks.len(), objects.len());
        Ok(tasks)
    }

    fn resolver_pool(&self, snapshot: &RepoSnapshot, index: Arc<RepoIndex>, sources: Arc<BTreeMap<String, String>>) -> ResolverPool {
        match &self.config.fim.lsp_command {
            None => ResolverPool::from_index(index),
            Some(cmd) => {
                let cmd = cmd.clone();
                let root = snapshot.root.clone();
                let timeout = Duration::from_secs_f64(self.config.fim.lsp_timeout_secs);
                ResolverPool::new(move || {
                    LspResolver::spawn(&cmd, &root, timeout, Arc::clone(&sources)).map(|r| Box::new(r) as Box<dyn Resolver>)
                })
            }
        }
    }

    /// Classified, coverage-selected FIM holes.
    pub fn sample_fim(&self) -> Result<Vec<FimTask>> {
        let cfg = &self.config;
        let summary = self.summary()?;
        let snapshot = self.snapshot(&summary)?;
        let layout = cfg.layout();
        let sources = snapshot.source_files(&self.registry)?;
        let include_tests = cfg.fim.include_tests;
        let filter = |p: &str| include_tests || !layout.is_test_path(p);
        let scan = enumerate_holes_in(&sources, &filter, cfg.fim.min_body_lines, &self.registry)?;
        let index = Arc::new(RepoIndex::build(sources.clone(), &self.registry, &cfg.layout.source_roots));
        let pool = self.resolver_pool(&snapshot, index, Arc::new(sources.clone()));
        let classified = classify_all(&scan.holes, &pool, cfg.max_parallel)?;
        let candidates: Vec<ClassifiedHole> = scan
            .holes
            .iter()
            .zip(&classified)
            .map(|(h, c)| ClassifiedHole {
                hole: h.clone(),
                classification: c.classification,
                dep_targets: c.dep_targets.clone(),
            })
            .collect();
        let selected = select_holes(&candidates, cfg.budgets.fim, cfg.fim.neg_ratio, cfg.seed());
        let provenance = snapshot.head_provenance();
        let tasks: Vec<FimTask> = selected
            .iter()
            .map(|c| make_fim_task(&c.hole, &sources[&c.hole.path], c.classification, c.dep_targets.clone(), provenance.clone()))
            .collect();
        let positives = candidates.iter().filter(|c| c.classification == Classification::Positive).count();
        let selected_positive = tasks.iter().filter(|t| t.classification == Classification::Positive).count();
        let report = FimReport {
            candidates: candidates.len(),
            positives,
            negatives: candidates.len() - positives,
            selected_positive,
            selected_negative: tasks.len() - selected_positive,
            resolver_timeouts: classified.iter().map(|c| c.timeouts).sum(),
            skipped_files: scan.skipped.clone(),
        };
        write_jsonl(&self.stage_file("fim.jsonl"), &tasks)?;
        write_json(&self.stage_file("fim_report.json"), &report)?;
        log::info!("fim: {} tasks ({} positive) from {} holes", tasks.len(), selected_positive, candidates.len());
        Ok(tasks)
    }

    pub fn filter(&self) -> FilterPolicy {
        self.config.filter()
    }

    /// Candidate bugs for the newest admitted PRs, up to the replay budget.
    pub fn mirror_bugs(&self) -> Result<Vec<MirroredBug>> {
        let cfg = &self.config;
        let summary = self.summary()?;
        let snapshot = self.snapshot(&summary)?;
        let pulls = self.pulls()?;
        let mut admitted = apply_filter(&pulls, &self.filter());
        newest_first(&mut admitted);
        admitted.truncate(cfg.budgets.replay);
        let index = self.index(&snapshot)?;
        let layout = cfg.layout();
        let ctx = MirrorContext {
            head: snapshot.head.clone(),
            head_timestamp: snapshot.head_timestamp,
            index: &index,
            layout: &layout,
            fuzz: cfg.mirror.fuzz,
            max_tests: cfg.mirror.max_tests,
        };
        let mut generator = cfg.mirror.generator.as_ref().map(|c| SubprocessGenerator {
            command: c.clone(),
            timeout: Duration::from_secs(cfg.mirror.generator_timeout_secs),
        });
        let mut bugs = Vec::new();
        let mut diagnostics = Vec::new();
        for pr in &admitted {
            let tree = head_tree_for(&snapshot, pr)?;
            let g = generator.as_mut().map(|g| g as &mut dyn TextGenerator);
            let (bug, diag) = mirror_pull(&ctx, &tree, pr, g);
            if let Some(d) = diag {
                log::warn!("{d}");
                diagnostics.push(d);
            }
            bugs.push(bug);
        }
        let mut statuses = BTreeMap::new();
        for b in &bugs {
            *statuses.entry(status_key(&b.status)).or_insert(0) += 1;
        }
        let report = MirrorReport {
            pulls: pulls.len(),
            admitted: apply_filter(&pulls, &self.filter()).len(),
            mirrored: bugs.len(),
            statuses,
            diagnostics,
            yield_report: yield_ratio(&pulls, &FilterPolicy::strict(), &FilterPolicy::relaxed()),
        };
        write_jsonl(&self.stage_file("bugs.jsonl"), &bugs)?;
        write_json(&self.stage_file("mirror_report.json"), &report)?;
        log::info!("mirror: {} candidate bugs from {} admitted PRs", bugs.len(), report.admitted);
        Ok(bugs)
    }

    /// Runs every candidate bug on the worker pool. Bugs that are not
    /// candidates pass through unchanged.
    pub fn validate(&self) -> Result<Vec<MirroredBug>> {
        let cfg = &self.config;
        let summary = self.summary()?;
        let bugs: Vec<MirroredBug> = read_jsonl(&self.require("bugs.jsonl", "mirror-bugs")?)?;
        let snapshot = self.snapshot(&summary)?;
        let adapter = Arc::new(cfg.adapter()?);
        let opts = Arc::new(self.harness_options());
        let pool = WorkerPool::new(cfg.max_parallel);
        let handles: Vec<_> = bugs
            .iter()
            .map(|bug| {
                (bug.status == BugStatus::Candidate).then(|| {
                    let (bug, git, head) = (bug.clone(), snapshot.git(), snapshot.head.clone());
                    let (adapter, opts) = (Arc::clone(&adapter), Arc::clone(&opts));
                    pool.submit(move || validate_bug(&bug, &git, &head, &adapter, &opts))
                })
            })
            .collect();
        let mut out = Vec::new();
        let mut reports: Vec<ValidationReport> = Vec::new();
        for (mut bug, handle) in bugs.into_iter().zip(handles) {
            if let Some(h) = handle {
                match h.wait() {
                    Ok(r) => {
                        bug.status = r.verdict.clone();
                        bug.fail_to_pass = r.fail_to_pass.clone();
                        reports.push(r);
                    }
                    Err(e) => {
                        log::warn!("{}: {e}", bug.id);
                        bug.status = BugStatus::Unvalidatable { reason: e.to_string() };
                    }
                }
            }
            out.push(bug);
        }
        write_jsonl(&self.stage_file("bugs_validated.jsonl"), &out)?;
        write_jsonl(&self.stage_file("validation.jsonl"), &reports)?;
        let validated = out.iter().filter(|b| b.status == BugStatus::Validated).count();
        log::info!("validate: {validated} of {} bugs validated", out.len());
        Ok(out)
    }

    pub fn validated_bugs(&self) -> Result<Vec<MirroredBug>> {
        read_jsonl(&self.require("bugs_validated.jsonl", "validate")?)
    }

    /// Alignment instances for validated bugs.
    pub fn make_align(&self) -> Result<Vec<TaskInstance>> {
        let summary = self.summary()?;
        let bugs = self.validated_bugs()?;
        let align = forge::align_instances(&bugs, &self.repo_ref(&summary), &self.env_spec(&summary));
        write_jsonl(&self.stage_file("align.jsonl"), &align)?;
        log::info!("align: {} instances", align.len());
        Ok(align)
    }

    /// Judges a candidate reproduction-test patch against a validated bug.
    pub fn check_candidate(&self, bug_id: &str, patch_text: &str) -> Result<ReproReport> {
        let summary = self.summary()?;
        let snapshot = self.snapshot(&summary)?;
        let bug = self
            .validated_bugs()?
            .into_iter()
            .find(|b| b.id == bug_id)
            .ok_or_else(|| PipelineError::UnknownBug(bug_id.to_string()))?;
        let adapter = self.config.adapter()?;
        Ok(evaluate_repro_test(
            patch_text,
            &bug,
            &snapshot.git(),
            &snapshot.head,
            &adapter,
            &self.config.layout(),
            &self.registry,
            &self.harness_options(),
        )?)
    }

    /// Assembles all stage outputs and writes the split dataset.
    pub fn emit(&self) -> Result<Manifest> {
        let summary = self.summary()?;
        let design: Vec<DesignTask> = read_jsonl(&self.require("design.jsonl", "sample-design")?)?;
        let fim: Vec<FimTask> = read_jsonl(&self.require("fim.jsonl", "sample-fim")?)?;
        let bugs = self.validated_bugs()?;
        let align: Vec<TaskInstance> = read_jsonl(&self.require("align.jsonl", "make-align")?)?;
        let repo = self.repo_ref(&summary);
        let assembly = assemble_with_align(&design, &fim, &bugs, align, &repo, &self.env_spec(&summary));
        if assembly.duplicates > 0 {
            log::info!("emit: dropped {} duplicate instances", assembly.duplicates);
        }
        let manifest = emit_dataset(assembly.instances, &self.config.cutoff, &self.dataset_dir(), self.config.seed(), &self.config.echo())?;
        log::info!("emit: {} train, {} eval", manifest.totals.train, manifest.totals.eval);
        Ok(manifest)
    }

    /// Strict-versus-relaxed yield over the mined PRs.
    pub fn yield_report(&self) -> Result<YieldReport> {
        let pulls = self.pulls()?;
        let report = yield_ratio(&pulls, &FilterPolicy::strict(), &FilterPolicy::relaxed());
        write_json(&self.stage_file("yield.json"), &report)?;
        Ok(report)
    }
}
