//! Logical trajectory synthesis and minimization.
//!
//! Trajectories are enumerated as the Cartesian product of per-subtask path
//! sets in lexicographic order (last subtask varies fastest). The greedy
//! selection keeps trajectories that are entirely new to the constraint pool,
//! parks partially-new ones as candidates, and then fills the remaining gaps
//! from the candidates, preferring those that bring the most new paths.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::plan::{DecisionPath, LogicalTrajectory};

pub const DEFAULT_EXHAUSTIVE_BOUND: usize = 20;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TrajectoryError {
    #[error("path set {index} is empty")]
    EmptyPathSet { index: usize },
    #[error("exhaustive cover over {size} trajectories exceeds the bound of {bound}")]
    InstanceTooLarge { size: usize, bound: usize },
}

/// Lazy lexicographic Cartesian product over path sets.
#[derive(Debug, Clone)]
pub struct CartesianTrajectories<'a> {
    path_sets: &'a [Vec<DecisionPath>],
    cursor: Option<Vec<usize>>,
    remaining: usize,
}

pub fn cartesian_trajectories(path_sets: &[Vec<DecisionPath>]) -> Result<CartesianTrajectories<'_>, TrajectoryError> {
    if let Some(index) = path_sets.iter().position(Vec::is_empty) {
        return Err(TrajectoryError::EmptyPathSet { index });
    }
    let total = path_sets.iter().map(Vec::len).product();
    Ok(CartesianTrajectories { path_sets, cursor: Some(vec![0; path_sets.len()]), remaining: total })
}

impl Iterator for CartesianTrajectories<'_> {
    type Item = LogicalTrajectory;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        let cursor = self.cursor.as_mut()?;
        let item = LogicalTrajectory::new(
            cursor.iter().zip(self.path_sets).map(|(&i, set)| set[i].clone()).collect(),
        );
        self.remaining -= 1;
        for pos in (0..cursor.len()).rev() {
            cursor[pos] += 1;
            if cursor[pos] < self.path_sets[pos].len() {
                break;
            }
            cursor[pos] = 0;
        }
        Some(item)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for CartesianTrajectories<'_> {}

pub fn split_constraints(trajectory: &LogicalTrajectory) -> BTreeSet<String> {
    trajectory.path_ids().map(str::to_owned).collect()
}

/// Union of constraints over a trajectory collection.
pub fn constraint_union<'a>(trajectories: impl IntoIterator<Item = &'a LogicalTrajectory>) -> BTreeSet<String> {
    trajectories.into_iter().flat_map(|t| t.path_ids().map(str::to_owned)).collect()
}

/// Work counters for the greedy selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub main_loop_visits: usize,
    pub candidate_visits: usize,
    pub prioritized: usize,
    pub from_candidates: usize,
}

/// Greedy selection over interned constraint sets; returns the chosen
/// indices in selection order (prioritized picks first, then candidates).
///
/// Candidates are bucketed by how many uncovered constraints they had when
/// the main loop ended. Buckets are scanned from the largest count down and
/// a candidate is taken only if all of those constraints are still
/// uncovered; the rest are deferred to a final take-if-novel sweep. Each
/// candidate is visited at most twice.
pub fn select_minimal_indices(constraint_sets: &[Vec<u32>], universe_size: usize) -> (Vec<usize>, SelectionStats) {
    let mut pool = vec![false; universe_size];
    let mut selected = Vec::new();
    let mut buckets: Vec<Vec<usize>> = Vec::new();
    let mut stats = SelectionStats::default();
    let novel = |pool: &[bool], set: &[u32]| set.iter().filter(|&&c| !pool[c as usize]).count();
    let take = |pool: &mut [bool], set: &[u32]| set.iter().for_each(|&c| pool[c as usize] = true);

    for (index, set) in constraint_sets.iter().enumerate() {
        stats.main_loop_visits += 1;
        match novel(&pool, set) {
            n if n == set.len() && n > 0 => {
                take(&mut pool, set);
                selected.push(index);
                stats.prioritized += 1;
            }
            0 => {}
            n => {
                if buckets.len() <= n {
                    buckets.resize(n + 1, Vec::new());
                }
                buckets[n].push(index);
            }
        }
    }

    let mut deferred = Vec::new();
    for (count, bucket) in buckets.iter().enumerate().rev() {
        for &index in bucket {
            stats.candidate_visits += 1;
            let set = &constraint_sets[index];
            match novel(&pool, set) {
                n if n == count => {
                    take(&mut pool, set);
                    selected.push(index);
                    stats.from_candidates += 1;
                }
                0 => {}
                _ => deferred.push(index),
            }
        }
    }
    for index in deferred {
        stats.candidate_visits += 1;
        let set = &constraint_sets[index];
        if novel(&pool, set) > 0 {
            take(&mut pool, set);
            selected.push(index);
            stats.from_candidates += 1;
        }
    }
    (selected, stats)
}

/// Interns path ids into dense indices in first-seen order.
fn intern(trajectories: &[LogicalTrajectory]) -> (Vec<Vec<u32>>, usize) {
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let sets = trajectories
        .iter()
        .map(|t| {
            let mut set: Vec<u32> = t
                .path_ids()
                .map(|p| {
                    let next = ids.len() as u32;
                    *ids.entry(p).or_insert(next)
                })
                .collect();
            set.sort_unstable();
            set.dedup();
            set
        })
        .collect();
    (sets, ids.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub trajectories: Vec<LogicalTrajectory>,
    pub stats: SelectionStats,
}

pub fn minimal_trajectory_selection_with_stats(trajectories: &[LogicalTrajectory]) -> Selection {
    let (sets, universe) = intern(trajectories);
    let (indices, stats) = select_minimal_indices(&sets, universe);
    Selection { trajectories: indices.into_iter().map(|i| trajectories[i].clone()).collect(), stats }
}

pub fn minimal_trajectory_selection(trajectories: &[LogicalTrajectory]) -> Vec<LogicalTrajectory> {
    minimal_trajectory_selection_with_stats(trajectories).trajectories
}

/// Minimum-cardinality full cover by scanning all 2^N subsets; ties go to the
/// lexicographically smallest index set.
pub fn exhaustive_min_cover_indices(constraint_sets: &[Vec<u32>], universe_size: usize) -> Vec<usize> {
    let n = constraint_sets.len();
    let words = universe_size.div_ceil(64).max(1);
    let masks: Vec<Vec<u64>> = constraint_sets
        .iter()
        .map(|set| {
            let mut mask = vec![0u64; words];
            for &c in set {
                mask[c as usize / 64] |= 1 << (c % 64);
            }
            mask
        })
        .collect();
    let mut full = vec![0u64; words];
    for mask in &masks {
        for (w, m) in full.iter_mut().zip(mask) {
            *w |= m;
        }
    }

    let mut best: Option<Vec<usize>> = None;
    let mut acc = vec![0u64; words];
    for subset in 0u64..(1u64 << n) {
        acc.iter_mut().for_each(|w| *w = 0);
        let mut members = Vec::new();
        for (i, mask) in masks.iter().enumerate() {
            if subset & (1 << i) != 0 {
                members.push(i);
                for (w, m) in acc.iter_mut().zip(mask) {
                    *w |= m;
                }
            }
        }
        if acc != full {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => members.len() < b.len() || (members.len() == b.len() && members < *b),
        };
        if better {
            best = Some(members);
        }
    }
    best.unwrap_or_default()
}

pub fn exhaustive_min_cover(
    trajectories: &[LogicalTrajectory],
    bound: usize,
) -> Result<Vec<LogicalTrajectory>, TrajectoryError> {
    if trajectories.len() > bound || trajectories.len() >= 64 {
        return Err(TrajectoryError::InstanceTooLarge { size: trajectories.len(), bound });
    }
    let (sets, universe) = intern(trajectories);
    Ok(exhaustive_min_cover_indices(&sets, universe).into_iter().map(|i| trajectories[i].clone()).collect())
}

/// |A ∩ B| / |A ∪ B|, defined as 1 when both sets are empty.
pub fn jaccard_index<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Persisted trajectory set: ids and ordered path ids, plus path details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySetDoc {
    pub subtasks: Vec<String>,
    pub trajectories: Vec<TrajectoryEntry>,
    pub paths: BTreeMap<String, DecisionPath>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub trajectory_id: String,
    pub path_ids: Vec<String>,
}

impl TrajectorySetDoc {
    pub fn new(subtasks: Vec<String>, trajectories: &[LogicalTrajectory]) -> Self {
        let mut paths = BTreeMap::new();
        let entries = trajectories
            .iter()
            .map(|t| {
                for p in &t.paths {
                    paths.entry(p.path_id.clone()).or_insert_with(|| p.clone());
                }
                TrajectoryEntry { trajectory_id: t.trajectory_id.clone(), path_ids: t.path_ids().map(str::to_owned).collect() }
            })
            .collect();
        Self { subtasks, trajectories: entries, paths }
    }

    pub fn trajectories(&self) -> Result<Vec<LogicalTrajectory>, String> {
        self.trajectories
            .iter()
            .map(|entry| {
                let paths = entry
                    .path_ids
                    .iter()
                    .map(|id| self.paths.get(id).cloned().ok_or_else(|| format!("unknown path id `{id}`")))
                    .collect::<Result<Vec<_>, _>>()?;
                let t = LogicalTrajectory::new(paths);
                if t.trajectory_id != entry.trajectory_id {
                    return Err(format!("trajectory id mismatch for `{}`", entry.trajectory_id));
                }
                Ok(t)
            })
            .collect()
    }
}
