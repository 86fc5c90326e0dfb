//! Agent trajectories: length statistics, repetition-loop detection and the
//! pass@k estimator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Assistant,
    Environment,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    #[serde(default)]
    pub action: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Submitted,
    ExhaustedSteps,
    ExhaustedContext,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub instance_id: String,
    pub turns: Vec<Turn>,
    pub token_counts: Vec<u64>,
    pub terminal: Terminal,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrajectoryError {
    #[error("no trajectories")]
    EmptyInput,
    #[error("trajectory {instance_id}: {turns} turns but {counts} token counts")]
    CountMismatch {
        instance_id: String,
        turns: usize,
        counts: usize,
    },
}

impl TrajectoryRecord {
    pub fn check(&self) -> Result<(), TrajectoryError> {
        if self.turns.len() != self.token_counts.len() {
            return Err(TrajectoryError::CountMismatch {
                instance_id: self.instance_id.clone(),
                turns: self.turns.len(),
                counts: self.token_counts.len(),
            });
        }
        Ok(())
    }

    pub fn assistant_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::Assistant).count()
    }

    /// Tokens over every turn, environment observations included.
    pub fn total_tokens(&self) -> u64 {
        self.token_counts.iter().sum()
    }

    /// Actions in turn order.
    pub fn actions(&self) -> Vec<&str> {
        self.turns.iter().filter_map(|t| t.action.as_deref()).collect()
    }
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Welford's single-pass moments; `None` for no samples.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let (mut n, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
        for x in values {
            n += 1;
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
        }
        (n > 0).then(|| Self {
            mean,
            std: (m2 / n as f64).max(0.0).sqrt(),
        })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

pub const STATS_CONVENTION: &str =
    "turns = assistant turns; tokens = sum over all turns including environment observations; std = population standard deviation";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajStats {
    pub records: usize,
    pub avg_turns: MeanStd,
    pub avg_tokens: MeanStd,
    pub convention: String,
}

impl TrajStats {
    pub fn render(&self) -> String {
        format!(
            "trajectories: {}\nturns: {}\ntokens: {}\n({})\n",
            self.records, self.avg_turns, self.avg_tokens, self.convention
        )
    }
}

pub fn traj_stats(records: &[TrajectoryRecord]) -> Result<TrajStats, TrajectoryError> {
    for r in records {
        r.check()?;
    }
    let turns = MeanStd::of(records.iter().map(|r| r.assistant_turns() as f64)).ok_or(TrajectoryError::EmptyInput)?;
    let tokens = MeanStd::of(records.iter().map(|r| r.total_tokens() as f64)).ok_or(TrajectoryError::EmptyInput)?;
    Ok(TrajStats {
        records: records.len(),
        avg_turns: turns,
        avg_tokens: tokens,
        convention: STATS_CONVENTION.into(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopReport {
    pub detected: bool,
    pub start_index: usize,
    pub period: usize,
    pub repetitions: usize,
    /// The repeated block of actions.
    pub repeated_actions: Vec<String>,
}

impl LoopReport {
    fn none() -> Self {
        Self {
            detected: false,
            start_index: 0,
            period: 0,
            repetitions: 0,
            repeated_actions: Vec::new(),
        }
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Earliest position where a block of at most `max_period` actions repeats
/// back to back at least `min_reps` times; the smallest such period wins at
/// that position.
pub fn detect_loops_in(actions: &[&str], max_period: usize, min_reps: usize, normalize_ws: bool) -> LoopReport {
    let owned: Vec<String> = actions
        .iter()
        .map(|a| if normalize_ws { normalize(a) } else { a.to_string() })
        .collect();
    let seq = &owned;
    let min_reps = min_reps.max(2);
    for start in 0..seq.len() {
        for period in 1..=max_period.max(1) {
            if start + period * min_reps > seq.len() {
                break;
            }
            let block = &seq[start..start + period];
            let mut reps = 1;
            while start + (reps + 1) * period <= seq.len() && &seq[start + reps * period..start + (reps + 1) * period] == block {
                reps += 1;
            }
            if reps >= min_reps {
                return LoopReport {
                    detected: true,
                    start_index: start,
                    period,
                    repetitions: reps,
                    repeated_actions: block.to_vec(),
                };
            }
        }
    }
    LoopReport::none()
}

pub fn detect_loops(record: &TrajectoryRecord, max_period: usize, min_reps: usize, normalize_ws: bool) -> LoopReport {
    detect_loops_in(&record.actions(), max_period, min_reps, normalize_ws)
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("pass@k needs 0 <= c <= n and 1 <= k <= n (n={n}, c={c}, k={k})")]
pub struct DomainError {
    pub n: u64,
    pub c: u64,
    pub k: u64,
}

/// Unbiased pass@k, `1 - C(n-c, k) / C(n, k)`, as a running product.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, DomainError> {
    if c > n || k < 1 || k > n {
        return Err(DomainError { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let mut miss = 1.0f64;
    for i in (n - c + 1)..=n {
        miss *= 1.0 - k as f64 / i as f64;
    }
    Ok((1.0 - miss).clamp(0.0, 1.0))
}

/// One sampled attempt at an instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptResult {
    pub instance_id: String,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassAtK {
    pub k: u64,
    /// Mean over instances with at least k attempts.
    pub value: f64,
    pub instances: usize,
}

pub fn pass_at_k_table(results: &[AttemptResult], ks: &[u64]) -> Vec<PassAtK> {
    let mut per: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for r in results {
        let e = per.entry(&r.instance_id).or_default();
        e.0 += 1;
        e.1 += u64::from(r.success);
    }
    ks.iter()
        .map(|&k| {
            let vals: Vec<f64> = per.values().filter_map(|&(n, c)| pass_at_k(n, c, k).ok()).collect();
            PassAtK {
                k,
                value: if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 },
                instances: vals.len(),
            }
        })
        .collect()
}
