//! The unified task-instance schema, assembly from unit outputs, and
//! dataset emission with the temporal split.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cutoff::Cutoff;
use crate::design::DesignTask;
use crate::fim::{Classification, FimTask};
use crate::miner::{temporal_split, MissingProvenance, Provenance, Provenanced};
use crate::mirror::{BugStatus, MirroredBug};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Design,
    Fim,
    Replay,
    Align,
}

impl Unit {
    pub const ALL: [Unit; 4] = [Unit::Design, Unit::Fim, Unit::Replay, Unit::Align];

    pub fn as_str(&self) -> &'static str {
        match self {
            Unit::Design => "design",
            Unit::Fim => "fim",
            Unit::Replay => "replay",
            Unit::Align => "align",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoRef {
    pub name: String,
    pub head: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub base_commit: String,
    pub setup_commands: Vec<String>,
    pub test_command_template: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Validation {
    /// Free-form report judged against the listed sections.
    Design { target: String, report_sections: Vec<String> },
    /// Splice target: the holed text at `body_start` of `path` is replaced
    /// by the solution and compared against the ground truth.
    Fim {
        path: String,
        body_start: usize,
        holed_body: String,
        ground_truth_body: String,
        positive: bool,
    },
    /// Apply `reverse_patch` to the base commit; the fix must make every
    /// fail-to-pass test pass and keep the rest of the subset green.
    Replay {
        bug_id: String,
        reverse_patch: String,
        fail_to_pass: Vec<String>,
        test_subset: Vec<String>,
    },
    /// Submitted tests must fail with `reverse_patch` applied and pass on
    /// the base commit.
    Align {
        bug_id: String,
        reverse_patch: String,
        fail_to_pass: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub instance_id: String,
    pub unit: Unit,
    pub repo: RepoRef,
    pub prompt: String,
    pub env: EnvSpec,
    pub validation: Validation,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl Provenanced for TaskInstance {
    fn provenance_timestamp(&self) -> Option<i64> {
        self.provenance.timestamp
    }

    fn label(&self) -> String {
        self.instance_id.clone()
    }
}

/// JSON with object keys in sorted order.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json's Value keeps object keys in a BTreeMap, so a round trip
    // through it sorts them
    let v: Value = serde_json::to_value(value).expect("serializable");
    serde_json::to_string(&v).expect("serializable")
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// First 16 hex digits of the hash of the canonical (unit, head, prompt,
/// validation) payload.
pub fn instance_id(unit: Unit, head: &str, prompt: &str, validation: &Validation) -> String {
    let payload = serde_json::json!({
        "unit": unit,
        "head": head,
        "prompt": prompt,
        "validation": validation,
    });
    sha256_hex(canonical_json(&payload).as_bytes())[..16].to_string()
}

impl TaskInstance {
    pub fn new(unit: Unit, repo: RepoRef, prompt: String, env: EnvSpec, validation: Validation, provenance: Provenance) -> Self {
        Self {
            instance_id: instance_id(unit, &repo.head, &prompt, &validation),
            unit,
            repo,
            prompt,
            env,
            validation,
            provenance,
            split: None,
        }
    }
}

pub fn replay_prompt(bug: &MirroredBug) -> String {
    format!(
        "The repository is checked out at its base commit. A user reports the following problem:\n\n\
         <issue>\n{}\n</issue>\n\n\
         Explore the repository, find the root cause and change the non-test source files so that the \
         problem is resolved. Do not modify the tests.\n",
        bug.problem_statement.text.trim_end()
    )
}

pub fn align_prompt(bug: &MirroredBug) -> String {
    format!(
        "The repository is checked out at its base commit. A user reports the following problem:\n\n\
         <issue>\n{}\n</issue>\n\n\
         Write a reproduction test for this problem. Edit an existing test file or add a new one within \
         the existing test framework. The test must fail when the reported problem is present and pass \
         once it is fixed. Do not modify non-test files.\n",
        bug.problem_statement.text.trim_end()
    )
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assembly {
    pub instances: Vec<TaskInstance>,
    pub counts: BTreeMap<Unit, usize>,
    /// Inputs dropped as duplicates of an earlier instance.
    pub duplicates: usize,
    /// Bugs skipped because they were not validated.
    pub unvalidated: usize,
}

fn replay_instance(bug: &MirroredBug, repo: &RepoRef, env: &EnvSpec) -> TaskInstance {
    let validation = Validation::Replay {
        bug_id: bug.id.clone(),
        reverse_patch: bug.reverse_patch.clone(),
        fail_to_pass: bug.fail_to_pass.clone(),
        test_subset: bug.test_subset.clone(),
    };
    TaskInstance::new(Unit::Replay, repo.clone(), replay_prompt(bug), env.clone(), validation, bug.provenance.clone())
}

/// One alignment instance per validated bug, sharing the bug's provenance.
pub fn align_instances(bugs: &[MirroredBug], repo: &RepoRef, env: &EnvSpec) -> Vec<TaskInstance> {
    bugs.iter()
        .filter(|b| b.status == BugStatus::Validated)
        .map(|bug| {
            let validation = Validation::Align {
                bug_id: bug.id.clone(),
                reverse_patch: bug.reverse_patch.clone(),
                fail_to_pass: bug.fail_to_pass.clone(),
            };
            TaskInstance::new(Unit::Align, repo.clone(), align_prompt(bug), env.clone(), validation, bug.provenance.clone())
        })
        .collect()
}

/// Maps unit outputs to instances: one per design or FIM task, and a replay
/// plus an align instance per validated bug, sharing its provenance.
/// Identical payloads collapse to one instance.
pub fn assemble(
    design: &[DesignTask],
    fim: &[FimTask],
    bugs: &[MirroredBug],
    repo: &RepoRef,
    env: &EnvSpec,
) -> Assembly {
    assemble_with_align(design, fim, bugs, align_instances(bugs, repo, env), repo, env)
}

/// As [`assemble`], with alignment instances built separately.
pub fn assemble_with_align(
    design: &[DesignTask],
    fim: &[FimTask],
    bugs: &[MirroredBug],
    align: Vec<TaskInstance>,
    repo: &RepoRef,
    env: &EnvSpec,
) -> Assembly {
    let mut out = Assembly::default();
    let mut candidates = Vec::new();
    for t in design {
        let validation = Validation::Design {
            target: t.target.id.clone(),
            report_sections: vec![
                "functionality".into(),
                "design rationale".into(),
                "system interactions".into(),
            ],
        };
        candidates.push(TaskInstance::new(Unit::Design, repo.clone(), t.prompt.clone(), env.clone(), validation, t.provenance.clone()));
    }
    for t in fim {
        let validation = Validation::Fim {
            path: t.hole.path.clone(),
            body_start: t.hole.body_span.start,
            holed_body: t.holed_body.clone(),
            ground_truth_body: t.ground_truth_body.clone(),
            positive: t.classification == Classification::Positive,
        };
        candidates.push(TaskInstance::new(Unit::Fim, repo.clone(), t.instruction.clone(), env.clone(), validation, t.provenance.clone()));
    }
    for bug in bugs {
        if bug.status != BugStatus::Validated {
            out.unvalidated += 1;
            continue;
        }
        candidates.push(replay_instance(bug, repo, env));
    }
    candidates.extend(align);
    let mut seen = std::collections::BTreeSet::new();
    for c in candidates {
        if seen.insert(c.instance_id.clone()) {
            *out.counts.entry(c.unit).or_default() += 1;
            out.instances.push(c);
        } else {
            out.duplicates += 1;
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error(transparent)]
    MissingProvenance(#[from] MissingProvenance),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("instance {id} is in the train split but reveals commit time {timestamp} after the cutoff")]
    Leak { id: String, timestamp: i64 },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub eval: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub cutoff: Cutoff,
    pub seed: u64,
    pub counts: BTreeMap<Unit, SplitCounts>,
    pub totals: SplitCounts,
    pub config_hash: String,
    pub config: Value,
}

fn write_file(path: &Path, text: &str) -> Result<(), EmitError> {
    std::fs::write(path, text).map_err(|source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn jsonl(instances: &[TaskInstance]) -> String {
    let mut s = String::new();
    for i in instances {
        s.push_str(&canonical_json(i));
        s.push('\n');
    }
    s
}

/// Splits by the cutoff and writes `train.jsonl`, `eval.jsonl` and
/// `manifest.json` into `out_dir`. Lines are sorted by id and then shuffled
/// with `seed`, so output bytes depend only on the inputs and the seed.
pub fn emit_dataset(
    instances: Vec<TaskInstance>,
    cutoff: &Cutoff,
    out_dir: &Path,
    seed: u64,
    config: &Value,
) -> Result<Manifest, EmitError> {
    let (mut train, mut eval) = temporal_split(instances, cutoff)?;
    if let Some(leak) = train.iter().find(|i| !cutoff.admits(i.provenance.timestamp.unwrap_or(i64::MAX))) {
        return Err(EmitError::Leak {
            id: leak.instance_id.clone(),
            timestamp: leak.provenance.timestamp.unwrap_or_default(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (part, split) in [(&mut train, Split::Train), (&mut eval, Split::Eval)] {
        for i in part.iter_mut() {
            i.split = Some(split);
        }
        part.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        part.shuffle(&mut rng);
    }
    let mut counts: BTreeMap<Unit, SplitCounts> = Unit::ALL.iter().map(|u| (*u, SplitCounts::default())).collect();
    for i in &train {
        counts.entry(i.unit).or_default().train += 1;
    }
    for i in &eval {
        counts.entry(i.unit).or_default().eval += 1;
    }
    let manifest = Manifest {
        tool: "rcxforge".into(),
        tool_version: TOOL_VERSION.into(),
        cutoff: *cutoff,
        seed,
        counts,
        totals: SplitCounts {
            train: train.len(),
            eval: eval.len(),
        },
        config_hash: sha256_hex(canonical_json(config).as_bytes()),
        config: config.clone(),
    };
    std::fs::create_dir_all(out_dir).map_err(|source| EmitError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    write_file(&out_dir.join("train.jsonl"), &jsonl(&train))?;
    write_file(&out_dir.join("eval.jsonl"), &jsonl(&eval))?;
    let v: Value = serde_json::to_value(&manifest).expect("serializable");
    let text = serde_json::to_string_pretty(&v).expect("serializable") + "\n";
    write_file(&out_dir.join("manifest.json"), &text)?;
    Ok(manifest)
}

/// Reads a JSON Lines file of instances.
pub fn read_instances(path: &Path) -> Result<Vec<TaskInstance>, EmitError> {
    let text = std::fs::read_to_string(path).map_err(|source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| EmitError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })
        })
        .collect()
}
