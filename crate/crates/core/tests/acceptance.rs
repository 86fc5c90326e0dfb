//! Acceptance suite: runs every criterion and prints one PASS/FAIL line for
//! each. Exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use rcxforge::config::PipelineConfig;
use rcxforge::cutoff::Cutoff;
use rcxforge::diff::{self, apply_patch};
use rcxforge::fim::{carve, classify_hole, enumerate_holes_in, make_fim_task, select_holes, Classification, ClassifiedHole, HoleKind, StaticResolver, SyntaxHole};
use rcxforge::fixture::{self, Fixture, ReproExpectation};
use rcxforge::forge::{emit_dataset, read_instances, EnvSpec, RepoRef, TaskInstance, Unit, Validation};
use rcxforge::harness::ReproVerdict;
use rcxforge::index::RepoIndex;
use rcxforge::miner::{PullRecord, Provenance, RepoSnapshot};
use rcxforge::mirror::{apply_filter, yield_ratio, BugStatus, FilterPolicy, MirroredBug, RejectReason};
use rcxforge::pipeline::Pipeline;
use rcxforge::syntax::{ByteSpan, SyntaxRegistry};
use rcxforge::trajectory::{detect_loops_in, pass_at_k, traj_stats, MeanStd, Role, Terminal, TrajectoryRecord, Turn};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

struct Env {
    _dir: tempfile::TempDir,
    fixture: Fixture,
    config: std::path::PathBuf,
}

/// One fixture build shared by the criteria that need it.
fn env() -> &'static Env {
    static ENV: OnceLock<Env> = OnceLock::new();
    ENV.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let (fixture, config) = fixture::build_with_config(dir.path(), 7).expect("fixture");
        Env {
            _dir: dir,
            fixture,
            config,
        }
    })
}

/// The fixture pipeline after mirror and validation, computed once.
fn validated() -> &'static Result<(Pipeline, Vec<MirroredBug>), String> {
    static V: OnceLock<Result<(Pipeline, Vec<MirroredBug>), String>> = OnceLock::new();
    V.get_or_init(|| {
        let e = env();
        let cfg = PipelineConfig::load(&e.config).map_err(|x| x.to_string())?;
        let p = Pipeline::new(cfg);
        p.mine().map_err(|x| x.to_string())?;
        p.mirror_bugs().map_err(|x| x.to_string())?;
        let bugs = p.validate().map_err(|x| x.to_string())?;
        Ok((p, bugs))
    })
}

fn head_sources() -> BTreeMap<String, String> {
    let e = env();
    let snap = RepoSnapshot::open(&e.fixture.repo, "HEAD", fixture::CUTOFF.parse().unwrap()).unwrap();
    snap.source_files(&SyntaxRegistry::default()).unwrap()
}

fn all_holes(sources: &BTreeMap<String, String>) -> Vec<SyntaxHole> {
    enumerate_holes_in(sources, &|_| true, 1, &SyntaxRegistry::default()).unwrap().holes
}

fn c1_splice_identity() -> Outcome {
    let start = Instant::now();
    let sources = head_sources();
    let holes = all_holes(&sources);
    ensure!(holes.len() >= 100, "only {} holes", holes.len());
    let mut bad = Vec::new();
    for h in &holes {
        let src = &sources[&h.path];
        let holed = carve(src, h);
        let task = make_fim_task(h, src, Classification::Negative, BTreeSet::new(), Provenance::new([]));
        if holed == *src || task.splice_back(&holed).as_deref() != Ok(src.as_str()) {
            bad.push(h.id());
        }
    }
    let elapsed = start.elapsed();
    ensure!(bad.is_empty(), "{} of {} holes not restored: {:?}", bad.len(), holes.len(), &bad[..bad.len().min(5)]);
    ensure!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    Ok(format!("{} holes restored byte-identically in {:.2}s", holes.len(), elapsed.as_secs_f64()))
}

/// Brute-force import-graph oracle: a name used in the body counts when
/// the file imports it from an in-repository module, either as a module or
/// as a name that module defines at top level.
struct ImportOracle {
    files: BTreeMap<String, String>,
}

impl ImportOracle {
    fn module_file(&self, module: &str) -> Option<String> {
        let base = module.replace('.', "/");
        [format!("{base}.py"), format!("{base}/__init__.py")]
            .into_iter()
            .find(|p| self.files.contains_key(p))
    }

    fn absolute(from: &str, module: &str) -> String {
        let dots = module.chars().take_while(|c| *c == '.').count();
        if dots == 0 {
            return module.to_string();
        }
        let mut parts: Vec<&str> = from.split('/').collect();
        parts.pop();
        for _ in 1..dots {
            parts.pop();
        }
        let rest = &module[dots..];
        let mut m = parts.join(".");
        if !rest.is_empty() {
            if !m.is_empty() {
                m.push('.');
            }
            m.push_str(rest);
        }
        m
    }

    fn defines(&self, file: &str, name: &str) -> bool {
        let re = Regex::new(&format!(r"(?m)^(?:def|class)\s+{}\b|^{}\s*=", regex::escape(name), regex::escape(name))).unwrap();
        self.files.get(file).is_some_and(|t| re.is_match(t))
    }

    /// Local name -> defining file, for one file's imports.
    fn bindings(&self, path: &str) -> BTreeMap<String, String> {
        let from_re = Regex::new(r"(?m)^from\s+(\.*[\w.]*)\s+import\s+(.+)$").unwrap();
        let import_re = Regex::new(r"(?m)^import\s+([\w.]+)(?:\s+as\s+(\w+))?\s*$").unwrap();
        let text = &self.files[path];
        let mut out = BTreeMap::new();
        for c in from_re.captures_iter(text) {
            let module = Self::absolute(path, &c[1]);
            for item in c[2].trim_matches(|ch| ch == '(' || ch == ')').split(',') {
                let mut words = item.split_whitespace();
                let Some(name) = words.next() else { continue };
                let local = match (words.next(), words.next()) {
                    (Some("as"), Some(alias)) => alias,
                    _ => name,
                };
                if let Some(f) = self.module_file(&format!("{module}.{name}")) {
                    out.insert(local.to_string(), f);
                } else if let Some(f) = self.module_file(&module).filter(|f| self.defines(f, name)) {
                    out.insert(local.to_string(), f);
                }
            }
        }
        for c in import_re.captures_iter(text) {
            if let (Some(f), Some(alias)) = (self.module_file(&c[1]), c.get(2)) {
                out.insert(alias.as_str().to_string(), f);
            }
        }
        out
    }

    fn deps(&self, hole: &SyntaxHole) -> BTreeSet<String> {
        let strings = Regex::new(r#""[^"\n]*"|'[^'\n]*'"#).unwrap();
        let ident = Regex::new(r"[A-Za-z_]\w*").unwrap();
        let bindings = self.bindings(&hole.path);
        let src = &self.files[&hole.path];
        let mut deps = BTreeSet::new();
        for seg in &hole.segments {
            let body = strings.replace_all(&src[seg.start..seg.end], "\"\"").into_owned();
            for m in ident.find_iter(&body) {
                if body[..m.start()].ends_with('.') {
                    continue;
                }
                if let Some(f) = bindings.get(m.as_str()) {
                    if *f != hole.path {
                        deps.insert(f.clone());
                    }
                }
            }
        }
        deps
    }
}

fn c2_classification_oracle() -> Outcome {
    let sources = head_sources();
    let holes = all_holes(&sources);
    let registry = SyntaxRegistry::default();
    let index = std::sync::Arc::new(RepoIndex::build(sources.clone(), &registry, &["".to_string()]));
    let mut resolver = StaticResolver::new(index);
    let oracle = ImportOracle { files: sources };
    let mut disagreements = Vec::new();
    let mut positives = 0;
    for h in &holes {
        let got = classify_hole(h, &mut resolver).map_err(|e| e.to_string())?;
        let want = oracle.deps(h);
        let want_class = if want.is_empty() { Classification::Negative } else { Classification::Positive };
        if got.dep_targets != want || got.classification != want_class {
            disagreements.push(format!("{}: got {:?} want {:?}", h.id(), got.dep_targets, want));
        }
        positives += usize::from(want_class == Classification::Positive);
    }
    ensure!(disagreements.is_empty(), "{} disagreements, e.g. {:?}", disagreements.len(), &disagreements[..disagreements.len().min(3)]);
    ensure!(positives > 0 && positives < holes.len(), "degenerate classification: {positives} positives");
    Ok(format!("{} holes ({} positive), 0 disagreements", holes.len(), positives))
}

fn c3_greedy_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = 2000;
    let mut worst = f64::INFINITY;
    for case in 0..cases {
        let n = rng.random_range(0..=12usize);
        let universe = rng.random_range(1..=16u32);
        let sets: Vec<BTreeSet<String>> = (0..n)
            .map(|_| {
                let k = rng.random_range(0..=5);
                (0..k).map(|_| format!("dep{}.py", rng.random_range(0..universe))).collect()
            })
            .collect();
        let budget = rng.random_range(0..=n.max(1));
        let candidates: Vec<ClassifiedHole> = sets
            .iter()
            .enumerate()
            .map(|(i, s)| ClassifiedHole {
                hole: SyntaxHole {
                    path: "m.py".into(),
                    kind: HoleKind::FunctionDefinition,
                    name: format!("f{i}"),
                    header_span: ByteSpan::new(i * 100, i * 100 + 10),
                    body_span: ByteSpan::new(i * 100 + 10, i * 100 + 50),
                    segments: vec![ByteSpan::new(i * 100 + 10, i * 100 + 50)],
                    body_lines: 3,
                    references: vec![],
                },
                classification: Classification::Positive,
                dep_targets: s.clone(),
            })
            .collect();
        let picked = select_holes(&candidates, budget, 0.0, case);
        let covered: BTreeSet<&String> = picked.iter().flat_map(|c| c.dep_targets.iter()).collect();
        let mut optimum = 0;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize > budget {
                continue;
            }
            let u: BTreeSet<&String> = (0..n).filter(|i| mask >> i & 1 == 1).flat_map(|i| sets[i].iter()).collect();
            optimum = optimum.max(u.len());
        }
        let bound = (1.0 - (-1.0f64).exp()) * optimum as f64;
        ensure!(covered.len() as f64 >= bound - 1e-9, "case {case}: greedy {} < bound {bound:.3} (optimum {optimum})", covered.len());
        if optimum > 0 {
            worst = worst.min(covered.len() as f64 / optimum as f64);
        }
    }
    Ok(format!("{cases} cases, worst greedy/optimum ratio {worst:.3}"))
}

fn c4_inverse_composition() -> Outcome {
    let (p, bugs) = validated().as_ref().map_err(Clone::clone)?;
    let snap = RepoSnapshot::open(&p.config.repo, "HEAD", p.config.cutoff).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for bug in bugs.iter().filter(|b| !b.apply_report.is_conflict()) {
        let reverse = bug.reverse_diffs().map_err(|e| e.to_string())?;
        let paths: Vec<String> = reverse.iter().map(|d| d.path().to_string()).collect();
        let present = snap.read_files(&paths).map_err(|e| e.to_string())?;
        let head: BTreeMap<String, Option<String>> = paths.iter().map(|p| (p.clone(), present.get(p).cloned())).collect();
        let bugged = apply_patch(&head, &reverse, 0).map_err(|e| format!("{}: {e:?}", bug.id))?;
        let mut bugged_tree = head.clone();
        bugged_tree.extend(bugged.files);
        ensure!(bugged_tree != head, "{}: reverse patch changed nothing", bug.id);
        let restored = apply_patch(&bugged_tree, &diff::reverse(&reverse), 0).map_err(|e| format!("{}: {e:?}", bug.id))?;
        let mut restored_tree = bugged_tree.clone();
        restored_tree.extend(restored.files);
        ensure!(restored_tree == head, "{}: forward after reverse is not the identity", bug.id);
        checked += 1;
    }
    ensure!(checked >= 4, "only {checked} applicable PRs");
    Ok(format!("{checked} applicable fixture PRs round-trip byte-identically"))
}

fn bug_for(bugs: &[MirroredBug], pr: u64) -> Result<&MirroredBug, String> {
    bugs.iter()
        .find(|b| b.source_pr.pr_number == Some(pr))
        .ok_or_else(|| format!("no bug for PR #{pr}"))
}

fn c5_bug_validation() -> Outcome {
    let (_, bugs) = validated().as_ref().map_err(Clone::clone)?;
    let truth = bug_for(bugs, fixture::PR_TRUE_BUG)?;
    ensure!(truth.status == BugStatus::Validated, "true bug: {:?}", truth.status);
    let got: BTreeSet<&str> = truth.fail_to_pass.iter().map(String::as_str).collect();
    let want: BTreeSet<&str> = fixture::TRUE_BUG_FAIL_TO_PASS.into_iter().collect();
    ensure!(got == want, "true bug fail_to_pass {got:?}, want {want:?}");
    let rejected = |pr, reason| -> Result<(), String> {
        let b = bug_for(bugs, pr)?;
        ensure!(b.status == BugStatus::Rejected { reason }, "PR #{pr}: {:?}, want rejected({reason})", b.status);
        Ok(())
    };
    rejected(fixture::PR_NO_SIGNAL, RejectReason::NoSignal)?;
    rejected(fixture::PR_BROKEN_BASELINE, RejectReason::BrokenBaseline)?;
    rejected(fixture::PR_CONFLICT, RejectReason::Conflict)?;
    rejected(fixture::PR_TESTS_ONLY, RejectReason::EmptyPatch)?;
    let fuzzed = bug_for(bugs, fixture::PR_FUZZED)?;
    ensure!(
        fuzzed.apply_report == diff::ApplyReport::Fuzzed { lines: fixture::FUZZED_LINES } && fuzzed.status == BugStatus::Validated,
        "fuzzed PR: {:?} {:?}",
        fuzzed.apply_report,
        fuzzed.status
    );
    ensure!(fuzzed.fail_to_pass == fixture::FUZZED_FAIL_TO_PASS, "fuzzed fail_to_pass {:?}", fuzzed.fail_to_pass);
    Ok("validated (exact fail_to_pass), no_signal, broken_baseline; also conflict, empty_patch, fuzzed".into())
}

fn c6_repro_semantics() -> Outcome {
    let (p, bugs) = validated().as_ref().map_err(Clone::clone)?;
    p.make_align().map_err(|e| e.to_string())?;
    let bug = bug_for(bugs, fixture::PR_TRUE_BUG)?;
    let mut seen = Vec::new();
    for (name, patch, expected) in fixture::repro_candidates() {
        let report = p.check_candidate(&bug.id, &patch).map_err(|e| e.to_string())?;
        let ok = match (expected, &report.verdict) {
            (ReproExpectation::Accepted, ReproVerdict::Accepted { failing_on_bugged }) => !failing_on_bugged.is_empty(),
            (ReproExpectation::NoRepro, ReproVerdict::Rejected { reason }) => *reason == rcxforge::harness::ReproRejection::NoRepro,
            (ReproExpectation::TouchesSource, ReproVerdict::Rejected { reason }) => *reason == rcxforge::harness::ReproRejection::TouchesSource,
            _ => false,
        };
        ensure!(ok, "candidate {name}: got {:?}", report.verdict);
        seen.push(name);
    }
    Ok(format!("candidates {} judged as authored", seen.join(", ")))
}

fn synthetic_pr(n: u64, issue: bool, tests: bool, lines: usize) -> PullRecord {
    PullRecord {
        pr_number: Some(n),
        title: format!("PR {n}"),
        merge_commit: format!("{n:040}"),
        base_commit: format!("{:040}", n + 1000),
        diff: vec![],
        merged_at: 1_600_000_000 + n as i64,
        linked_issue_text: issue.then(|| format!("issue {n}")),
        touched_test_paths: if tests { vec!["tests/test_x.py".into()] } else { vec![] },
        total_changed_lines: lines,
    }
}

fn c7_yield() -> Outcome {
    let mut prs = vec![synthetic_pr(1, true, true, 40), synthetic_pr(2, true, true, 95)];
    // relaxed-only: each misses one strict requirement
    for n in 3..=8 {
        prs.push(synthetic_pr(n, false, true, 30));
    }
    for n in 9..=13 {
        prs.push(synthetic_pr(n, true, false, 60));
    }
    for n in 14..=17 {
        prs.push(synthetic_pr(n, true, true, 400 + n as usize));
    }
    prs.push(synthetic_pr(18, false, false, 1500));
    for n in 19..=20 {
        prs.push(synthetic_pr(n, true, true, 5000));
    }
    ensure!(prs.len() == 20, "corpus has {} PRs", prs.len());
    let (strict, relaxed) = (FilterPolicy::strict(), FilterPolicy::relaxed());
    let s: BTreeSet<_> = apply_filter(&prs, &strict).into_iter().map(|p| p.pr_number).collect();
    let r: BTreeSet<_> = apply_filter(&prs, &relaxed).into_iter().map(|p| p.pr_number).collect();
    ensure!(s.is_subset(&r), "strict set is not within relaxed set");
    let y = yield_ratio(&prs, &strict, &relaxed);
    ensure!(y.ratio > 1.0, "ratio {}", y.ratio);
    let (p, _) = validated().as_ref().map_err(Clone::clone)?;
    let f = p.yield_report().map_err(|e| e.to_string())?;
    Ok(format!(
        "20-PR corpus: strict {} ⊆ relaxed {}, ratio {:.1}; fixture repo ratio {:.1}",
        y.strict_count, y.relaxed_count, y.ratio, f.ratio
    ))
}

fn c8_temporal_leakage() -> Outcome {
    let cutoff: Cutoff = "2020-12-31".parse().unwrap();
    let boundary = cutoff.end_of_day();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 12_000;
    let repo = RepoRef {
        name: "r".into(),
        head: "h".repeat(40),
    };
    let instances: Vec<TaskInstance> = (0..n)
        .map(|i| {
            let ts = match i % 4 {
                0 => boundary + rng.random_range(-2i64..=2),
                _ => boundary + rng.random_range(-400 * 86_400i64..400 * 86_400),
            };
            let validation = Validation::Design {
                target: format!("t{i}"),
                report_sections: vec![],
            };
            TaskInstance::new(Unit::ALL[i % 4], repo.clone(), format!("p{i}"), EnvSpec::default(), validation, Provenance::new([(format!("c{i}"), ts)]))
        })
        .collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    emit_dataset(instances, &cutoff, dir.path(), 1, &serde_json::json!({})).map_err(|e| e.to_string())?;
    let train = read_instances(&dir.path().join("train.jsonl")).map_err(|e| e.to_string())?;
    let eval = read_instances(&dir.path().join("eval.jsonl")).map_err(|e| e.to_string())?;
    let leaks = train.iter().filter(|i| i.provenance.timestamp.is_none_or(|t| t > boundary)).count();
    let misplaced = eval.iter().filter(|i| i.provenance.timestamp.is_none_or(|t| t <= boundary)).count();
    ensure!(train.len() + eval.len() == n, "lost instances");
    ensure!(leaks == 0 && misplaced == 0, "{leaks} train leaks, {misplaced} eval misplacements");
    Ok(format!("{n} random instances: {} train, {} eval, 0 leaks", train.len(), eval.len()))
}

fn run_fixture_end_to_end(dir: &Path) -> Result<BTreeMap<&'static str, Vec<u8>>, String> {
    let (_, config) = fixture::build_with_config(dir, 11).map_err(|e| e.to_string())?;
    let p = Pipeline::new(PipelineConfig::load(&config).map_err(|e| e.to_string())?);
    p.run_all().map_err(|e| e.to_string())?;
    let mut out = BTreeMap::new();
    for name in ["train.jsonl", "eval.jsonl", "manifest.json"] {
        out.insert(name, std::fs::read(p.dataset_dir().join(name)).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn c9_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_fixture_end_to_end(a.path())?;
    let second = run_fixture_end_to_end(b.path())?;
    for (name, bytes) in &first {
        ensure!(second[name] == *bytes, "{name} differs between runs");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&first["manifest.json"]).unwrap();
    let total = manifest["totals"]["train"].as_u64().unwrap_or(0) + manifest["totals"]["eval"].as_u64().unwrap_or(0);
    for u in Unit::ALL {
        let c = &manifest["counts"][u.as_str()];
        ensure!(c["train"].as_u64().unwrap_or(0) + c["eval"].as_u64().unwrap_or(0) > 0, "unit {} is empty", u.as_str());
    }
    Ok(format!("two independent runs byte-identical ({} bytes, {total} instances)", first.values().map(Vec::len).sum::<usize>()))
}

fn c10_pass_at_k() -> Outcome {
    let mut checked = 0;
    for n in 1..=12u64 {
        for c in 0..=n {
            let mut prev_k = 0.0;
            for k in 1..=n {
                // exhaustive: share of k-subsets of n attempts (the first c
                // successful) that contain a success
                let (mut total, mut hit) = (0u64, 0u64);
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as u64 == k {
                        total += 1;
                        hit += u64::from(mask & ((1u32 << c) - 1) != 0);
                    }
                }
                let oracle = hit as f64 / total as f64;
                let got = pass_at_k(n, c, k).map_err(|e| e.to_string())?;
                ensure!((got - oracle).abs() <= 1e-12, "n={n} c={c} k={k}: {got} vs {oracle}");
                ensure!(got >= prev_k, "not monotone in k at n={n} c={c} k={k}");
                if c > 0 {
                    ensure!(got >= pass_at_k(n, c - 1, k).unwrap(), "not monotone in c at n={n} c={c} k={k}");
                }
                prev_k = got;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} grid points match enumeration within 1e-12; monotone in k and c"))
}

/// All (start, period) pairs whose block repeats at least `min_reps` times,
/// then the lexicographically smallest, with its full repetition count.
fn loop_oracle(seq: &[u8], max_period: usize, min_reps: usize) -> Option<(usize, usize, usize)> {
    let mut found = Vec::new();
    for start in 0..seq.len() {
        for period in 1..=max_period {
            let reps = (1..)
                .take_while(|r| start + r * period <= seq.len() && (0..r * period).all(|i| seq[start + i] == seq[start + i % period]))
                .last()
                .unwrap_or(0);
            if reps >= min_reps {
                found.push((start, period, reps));
            }
        }
    }
    found.into_iter().min_by_key(|&(s, p, _)| (s, p))
}

fn c11_loop_detector() -> Outcome {
    const SYMBOLS: [&str; 3] = ["view file.py", "run tests", "edit file.py"];
    let mut checked = 0u64;
    for (max_period, min_reps, max_len) in [(4usize, 3usize, 12usize), (6, 2, 10)] {
        for len in 0..=max_len {
            let count = 3usize.pow(len as u32);
            let mut seq = vec![0u8; len];
            for mut code in 0..count {
                for s in seq.iter_mut() {
                    *s = (code % 3) as u8;
                    code /= 3;
                }
                let actions: Vec<&str> = seq.iter().map(|&s| SYMBOLS[s as usize]).collect();
                let got = detect_loops_in(&actions, max_period, min_reps, false);
                let want = loop_oracle(&seq, max_period, min_reps);
                let got_t = got.detected.then_some((got.start_index, got.period, got.repetitions));
                ensure!(got_t == want, "{seq:?} (max_period {max_period}, min_reps {min_reps}): got {got_t:?} want {want:?}");
                checked += 1;
            }
        }
    }
    let stuck: Vec<&str> = std::iter::repeat_n("str_replace_editor view /testbed/django/db/models/query.py", 25).collect();
    let r = detect_loops_in(&stuck, 4, 3, false);
    ensure!(r.detected && r.period == 1 && r.repetitions == 25, "identical-action run not detected: {r:?}");
    let distinct: Vec<String> = (0..50).map(|i| format!("step {i}")).collect();
    let refs: Vec<&str> = distinct.iter().map(String::as_str).collect();
    ensure!(!detect_loops_in(&refs, 10, 2, false).detected, "all-distinct sequence flagged");
    Ok(format!("{checked} sequences agree with the oracle; identical-action run detected; distinct run rejected"))
}

fn c12_stats() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let records: Vec<TrajectoryRecord> = (0..500)
        .map(|i| {
            let turns = rng.random_range(1..80usize);
            let mut t = Vec::new();
            let mut counts = Vec::new();
            for j in 0..turns {
                let role = if j % 2 == 0 { Role::Assistant } else { Role::Environment };
                t.push(Turn {
                    role,
                    text: String::new(),
                    action: None,
                });
                counts.push(rng.random_range(10..5000u64));
            }
            TrajectoryRecord {
                instance_id: format!("i{i}"),
                turns: t,
                token_counts: counts,
                terminal: Terminal::Submitted,
            }
        })
        .collect();
    let s = traj_stats(&records).map_err(|e| e.to_string())?;
    let two_pass = |xs: Vec<f64>| {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        (mean, var.sqrt())
    };
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let (tm, ts) = two_pass(records.iter().map(|r| r.turns.iter().filter(|t| t.role == Role::Assistant).count() as f64).collect());
    let (km, ks) = two_pass(records.iter().map(|r| r.token_counts.iter().sum::<u64>() as f64).collect());
    for (name, got, want) in [
        ("turn mean", s.avg_turns.mean, tm),
        ("turn std", s.avg_turns.std, ts),
        ("token mean", s.avg_tokens.mean, km),
        ("token std", s.avg_tokens.std, ks),
    ] {
        ensure!(rel(got, want) <= 1e-9, "{name}: {got} vs {want}");
    }
    let shape = Regex::new(r"^\d+\.\d{2} ± \d+\.\d{2}$").unwrap();
    ensure!(shape.is_match(&s.avg_turns.to_string()), "rendering {}", s.avg_turns);
    let example = MeanStd { mean: 41.62, std: 19.07 }.to_string();
    ensure!(example == "41.62 ± 19.07", "rendering {example}");
    Ok(format!("500 trajectories: turns {}, tokens {}; two-pass moments agree to 1e-9", s.avg_turns, s.avg_tokens))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("splice identity", c1_splice_identity),
        ("classification oracle equivalence", c2_classification_oracle),
        ("greedy coverage bound", c3_greedy_bound),
        ("inverse composition", c4_inverse_composition),
        ("bug validation semantics", c5_bug_validation),
        ("reproduction-test semantics", c6_repro_semantics),
        ("yield monotonicity", c7_yield),
        ("temporal leakage", c8_temporal_leakage),
        ("determinism", c9_determinism),
        ("pass@k", c10_pass_at_k),
        ("loop detector", c11_loop_detector),
        ("stats", c12_stats),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
