//! Hole selection: dependency-diverse positives, a small seeded sample of
//! negatives, and inner-over-outer resolution of nested holes.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Classification, SyntaxHole};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedHole {
    pub hole: SyntaxHole,
    pub classification: Classification,
    pub dep_targets: BTreeSet<String>,
}

/// Index of the set with the largest marginal gain over `covered`. Ties go
/// to the larger set, then to the lower index.
fn best_pick<T: Ord>(sets: &[&BTreeSet<T>], covered: &BTreeSet<&T>, taken: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, usize, usize)> = None;
    for (i, s) in sets.iter().enumerate() {
        if taken[i] {
            continue;
        }
        let gain = s.iter().filter(|d| !covered.contains(d)).count();
        let better = match best {
            None => true,
            Some((_, g, size)) => (gain, s.len()) > (g, size),
        };
        if better {
            best = Some((i, gain, s.len()));
        }
    }
    best.map(|(i, _, _)| i)
}

/// Plain greedy maximum coverage: indices of up to `budget` sets, in pick
/// order.
pub fn greedy_cover<T: Ord>(sets: &[BTreeSet<T>], budget: usize) -> Vec<usize> {
    let refs: Vec<&BTreeSet<T>> = sets.iter().collect();
    let mut taken = vec![false; sets.len()];
    let mut covered = BTreeSet::new();
    let mut picks = Vec::new();
    while picks.len() < budget {
        let Some(i) = best_pick(&refs, &covered, &taken) else {
            break;
        };
        taken[i] = true;
        covered.extend(sets[i].iter());
        picks.push(i);
    }
    picks
}

fn negative_quota(positives: usize, neg_ratio: f64, negatives: usize) -> usize {
    ((neg_ratio.clamp(0.0, 1.0) * positives as f64).floor() as usize).min(negatives)
}

/// Largest positive count `p` whose negative quota still fits the budget:
/// `p + min(floor(neg_ratio * p), negatives) <= budget`.
pub fn positive_capacity(budget: usize, neg_ratio: f64, negatives: usize) -> usize {
    (0..=budget)
        .rev()
        .find(|&p| p + negative_quota(p, neg_ratio, negatives) <= budget)
        .unwrap_or(0)
}

/// Selects up to `budget` holes. Positives are picked greedily by new
/// dependency coverage, leaving room for their negative quota; when a pick
/// nests with an already selected hole the inner one is kept. Negatives fill
/// at most `floor(neg_ratio * positives)` slots, drawn uniformly with
/// `seed`. Output is in candidate order.
pub fn select_holes(candidates: &[ClassifiedHole], budget: usize, neg_ratio: f64, seed: u64) -> Vec<ClassifiedHole> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| candidates[i].hole.id());
    let positives: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| candidates[i].classification == Classification::Positive)
        .collect();
    let negatives: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| candidates[i].classification == Classification::Negative)
        .collect();

    let sets: Vec<&BTreeSet<String>> = positives.iter().map(|&i| &candidates[i].dep_targets).collect();
    let mut taken = vec![false; positives.len()];
    let mut selected: Vec<usize> = Vec::new();
    let capacity = positive_capacity(budget, neg_ratio, negatives.len());
    loop {
        if selected.len() >= capacity {
            break;
        }
        let covered: BTreeSet<&String> = selected.iter().flat_map(|&i| candidates[i].dep_targets.iter()).collect();
        let Some(k) = best_pick(&sets, &covered, &taken) else {
            break;
        };
        taken[k] = true;
        let pick = positives[k];
        let hole = &candidates[pick].hole;
        let nesting: Vec<usize> = selected
            .iter()
            .copied()
            .filter(|&s| candidates[s].hole.nests_with(hole))
            .collect();
        if nesting.is_empty() {
            selected.push(pick);
            continue;
        }
        // the pick is outer to something already chosen: keep the inner one
        if nesting
            .iter()
            .any(|&s| hole.body_span.contains(&candidates[s].hole.body_span))
        {
            continue;
        }
        selected.retain(|s| !nesting.contains(s));
        selected.push(pick);
    }

    let quota = negative_quota(selected.len(), neg_ratio, negatives.len()).min(budget.saturating_sub(selected.len()));
    let mut pool = negatives;
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen_neg = Vec::new();
    for i in pool {
        if chosen_neg.len() >= quota {
            break;
        }
        let hole = &candidates[i].hole;
        let clashes = selected
            .iter()
            .chain(chosen_neg.iter())
            .any(|&s| candidates[s].hole.nests_with(hole));
        if !clashes {
            chosen_neg.push(i);
        }
    }
    selected.extend(chosen_neg);
    selected.sort_by(|&a, &b| candidates[a].hole.order_key().cmp(&candidates[b].hole.order_key()));
    selected.into_iter().map(|i| candidates[i].clone()).collect()
}
