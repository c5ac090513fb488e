//! Logic coverage of a set of environments against ground-truth plans.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::environment::{EnvironmentSpec, Metadata};
use crate::plan::{extract_paths, normalize, BehaviorPlanTree, DecisionPath};
use crate::task::TaskSchema;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("ground-truth plans have no decision paths")]
    EmptyUniverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: usize,
    pub total: usize,
    pub value: f64,
    /// Universe entries not covered by any environment.
    pub uncovered: Vec<String>,
}

fn coverage(covered: usize, total: usize, uncovered: Vec<String>) -> Coverage {
    Coverage { covered, total, value: covered as f64 / total as f64, uncovered }
}

fn universe(trees: &[BehaviorPlanTree]) -> Vec<DecisionPath> {
    trees.iter().flat_map(extract_paths).collect()
}

fn metadata<'e>(envs: &'e [EnvironmentSpec]) -> impl Iterator<Item = &'e Metadata> + Clone {
    envs.iter().map(|e| &e.metadata)
}

/// Path-level coverage: a path counts once some environment satisfies each
/// of its query-response steps. Every path weighs the same.
pub fn logic_coverage_detail(
    envs: &[EnvironmentSpec],
    trees: &[BehaviorPlanTree],
    schema: &TaskSchema,
) -> Result<Coverage, MetricsError> {
    let paths = universe(trees);
    if paths.is_empty() {
        return Err(MetricsError::EmptyUniverse);
    }
    let uncovered: Vec<String> = paths
        .iter()
        .filter(|p| !metadata(envs).any(|m| schema.path_satisfied(p, m) == Some(true)))
        .map(|p| p.path_id.clone())
        .collect();
    Ok(coverage(paths.len() - uncovered.len(), paths.len(), uncovered))
}

pub fn logic_coverage(envs: &[EnvironmentSpec], trees: &[BehaviorPlanTree], schema: &TaskSchema) -> Result<f64, MetricsError> {
    logic_coverage_detail(envs, trees, schema).map(|c| c.value)
}

/// Condition-level coverage over distinct `(query, response)` pairs.
pub fn logic_coverage_atomic(
    envs: &[EnvironmentSpec],
    trees: &[BehaviorPlanTree],
    schema: &TaskSchema,
) -> Result<Coverage, MetricsError> {
    let mut seen = BTreeSet::new();
    let steps: Vec<_> = universe(trees)
        .into_iter()
        .flat_map(|p| p.steps)
        .filter(|s| seen.insert((normalize(&s.query), normalize(&s.response))))
        .collect();
    if steps.is_empty() {
        return Err(MetricsError::EmptyUniverse);
    }
    let uncovered: Vec<String> = steps
        .iter()
        .filter(|s| {
            let conditions = schema.conditions_for(s);
            !metadata(envs).any(|m| conditions.is_some_and(|c| c.iter().all(|c| c.holds(m))))
        })
        .map(|s| format!("{}={}", normalize(&s.query), normalize(&s.response)))
        .collect();
    Ok(coverage(steps.len() - uncovered.len(), steps.len(), uncovered))
}
