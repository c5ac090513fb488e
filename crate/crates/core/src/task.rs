//! Per-task vocabulary: how plan queries and leaf actions map onto
//! `(entity, attribute)` metadata, plus the on-disk task bundle.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::Metadata;
use crate::plan::{normalize, parse_behavior_plan, BehaviorPlanTree, DecisionPath, PlanError, QueryResponse, TaskSpec};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("schema: {0}")]
    Schema(String),
}

/// One predicate over world metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub entity: String,
    pub attribute: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_equals: Option<String>,
}

impl Condition {
    pub fn equals(entity: &str, attribute: &str, value: &str) -> Self {
        Self { entity: entity.into(), attribute: attribute.into(), equals: Some(value.into()), not_equals: None }
    }

    pub fn not_equals(entity: &str, attribute: &str, value: &str) -> Self {
        Self { entity: entity.into(), attribute: attribute.into(), equals: None, not_equals: Some(value.into()) }
    }

    /// Checks against any `entity.attribute` lookup; missing reads as `absent`.
    pub fn holds_with<'a>(&self, lookup: impl Fn(&str, &str) -> &'a str) -> bool {
        let value = lookup(&self.entity, &self.attribute);
        self.equals.as_deref().is_none_or(|v| v == value) && self.not_equals.as_deref().is_none_or(|v| v != value)
    }

    pub fn holds(&self, metadata: &Metadata) -> bool {
        self.holds_with(|e, a| metadata.value(e, a))
    }

    fn validate(&self) -> Result<(), String> {
        if self.entity.is_empty() || self.attribute.is_empty() {
            return Err("condition needs an entity and an attribute".into());
        }
        if self.equals.is_none() && self.not_equals.is_none() {
            return Err(format!("condition on {}.{} has no test", self.entity, self.attribute));
        }
        Ok(())
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.entity, self.attribute)?;
        if let Some(v) = &self.equals {
            write!(f, " == {v}")?;
        }
        if let Some(v) = &self.not_equals {
            write!(f, " != {v}")?;
        }
        Ok(())
    }
}

/// Bridges plan text to metadata. Query and leaf keys are matched after
/// normalization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskSchema {
    /// query → response → conjunction of conditions.
    pub queries: BTreeMap<String, BTreeMap<String, Vec<Condition>>>,
    /// leaf action text → end-state conditions.
    #[serde(default)]
    pub leaf_goals: BTreeMap<String, Vec<Condition>>,
    /// Objects every environment of the task must contain.
    #[serde(default)]
    pub required_objects: Vec<String>,
    /// Attributes the simulator needs, per entity.
    #[serde(default)]
    pub required_attributes: BTreeMap<String, Vec<String>>,
}

impl TaskSchema {
    pub fn validate(&self) -> Result<(), TaskError> {
        let all = self.queries.values().flat_map(|r| r.values()).chain(self.leaf_goals.values()).flatten();
        for condition in all {
            condition.validate().map_err(TaskError::Schema)?;
        }
        Ok(())
    }

    pub fn conditions_for(&self, step: &QueryResponse) -> Option<&[Condition]> {
        let query = normalize(&step.query);
        let response = normalize(&step.response);
        let (_, responses) = self.queries.iter().find(|(q, _)| normalize(q) == query)?;
        responses.iter().find(|(r, _)| normalize(r) == response).map(|(_, c)| c.as_slice())
    }

    pub fn goals_for(&self, leaf_action: &str) -> Option<&[Condition]> {
        let leaf = normalize(leaf_action);
        self.leaf_goals.iter().find(|(l, _)| normalize(l) == leaf).map(|(_, c)| c.as_slice())
    }

    /// `Some(true)` when every step of the path holds; `None` if a step is
    /// not described by the schema.
    pub fn path_satisfied(&self, path: &DecisionPath, metadata: &Metadata) -> Option<bool> {
        let mut all = true;
        for step in &path.steps {
            all &= self.conditions_for(step)?.iter().all(|c| c.holds(metadata));
        }
        Some(all)
    }

    /// Steps whose conditions fail (or are unknown) under `metadata`.
    pub fn unmet_steps<'a>(&self, steps: impl IntoIterator<Item = &'a QueryResponse>, metadata: &Metadata) -> Vec<QueryResponse> {
        steps
            .into_iter()
            .filter(|s| !self.conditions_for(s).is_some_and(|c| c.iter().all(|c| c.holds(metadata))))
            .cloned()
            .collect()
    }

    /// Goals an environment implies: the leaf goals of every ground-truth
    /// path the metadata satisfies, in path order, without duplicates.
    pub fn goals_for_environment(&self, paths: &[DecisionPath], metadata: &Metadata) -> Vec<Condition> {
        let mut goals: Vec<Condition> = Vec::new();
        for path in paths {
            if self.path_satisfied(path, metadata) == Some(true) {
                for goal in self.goals_for(&path.leaf_action).unwrap_or_default() {
                    if !goals.contains(goal) {
                        goals.push(goal.clone());
                    }
                }
            }
        }
        goals
    }
}

pub fn read_text(path: &Path) -> Result<String, TaskError> {
    fs::read_to_string(path).map_err(|e| TaskError::Io { path: path.to_path_buf(), message: e.to_string() })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, TaskError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| TaskError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

/// A task directory: `task.json`, `schema.json`, `action_model.json`, the
/// ground-truth `plan.json` and `policies/*.json`.
#[derive(Debug, Clone)]
pub struct TaskBundle {
    pub dir: PathBuf,
    pub task: TaskSpec,
    pub schema: TaskSchema,
    /// Subtask ids in plan order, from `task.json`'s `subtasks` list.
    pub subtask_ids: Vec<String>,
    pub ground_truth: Vec<BehaviorPlanTree>,
}

#[derive(Deserialize)]
struct TaskFile {
    #[serde(flatten)]
    task: TaskSpec,
    #[serde(default)]
    subtasks: Vec<String>,
}

impl TaskBundle {
    /// Loads from the directory holding `task_file`.
    pub fn load(task_file: &Path) -> Result<Self, TaskError> {
        let dir = task_file.parent().unwrap_or(Path::new(".")).to_path_buf();
        let file: TaskFile = read_json(task_file)?;
        file.task.validate()?;
        let schema: TaskSchema = read_json(&dir.join("schema.json"))?;
        schema.validate()?;
        let plan_path = dir.join("plan.json");
        let ground_truth = if plan_path.exists() {
            let roots = parse_behavior_plan(&read_text(&plan_path)?)?;
            if roots.len() != file.subtasks.len() {
                return Err(TaskError::Schema(format!(
                    "plan.json has {} trees but task.json lists {} subtasks",
                    roots.len(),
                    file.subtasks.len()
                )));
            }
            file.subtasks.iter().zip(roots).map(|(id, root)| BehaviorPlanTree::new(id.clone(), root)).collect()
        } else {
            Vec::new()
        };
        Ok(Self { dir, task: file.task, schema, subtask_ids: file.subtasks, ground_truth })
    }

    pub fn action_model_path(&self) -> PathBuf {
        self.dir.join("action_model.json")
    }

    pub fn policies_dir(&self) -> PathBuf {
        self.dir.join("policies")
    }

    pub fn ground_truth_paths(&self) -> Vec<DecisionPath> {
        self.ground_truth.iter().flat_map(crate::plan::extract_paths).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Metadata;

    fn schema() -> TaskSchema {
        let mut s = TaskSchema::default();
        s.queries.insert(
            "There is a toy on the floor?".into(),
            BTreeMap::from([
                ("YES".into(), vec![Condition::equals("toy", "location", "floor")]),
                ("NO".into(), vec![Condition::not_equals("toy", "location", "floor")]),
            ]),
        );
        s.leaf_goals.insert("Put it away.".into(), vec![Condition::equals("toy", "location", "in_box")]);
        s
    }

    #[test]
    fn lookup_is_normalized() {
        let s = schema();
        let step = QueryResponse::new("there is a TOY on the floor", "yes");
        assert_eq!(s.conditions_for(&step).unwrap().len(), 1);
        assert!(s.goals_for("put it away").is_some());
        assert!(s.conditions_for(&QueryResponse::new("Is it raining?", "YES")).is_none());
    }

    #[test]
    fn conditions_read_absent() {
        let mut meta = Metadata::default();
        let no = Condition::not_equals("toy", "location", "floor");
        assert!(no.holds(&meta));
        meta.insert("toy", "location", "floor");
        assert!(!no.holds(&meta));
        assert!(Condition::equals("toy", "location", "floor").holds(&meta));
    }

    #[test]
    fn goals_follow_satisfied_paths() {
        let s = schema();
        let yes = DecisionPath::new("toy", vec![QueryResponse::new("There is a toy on the floor?", "YES")], "Put it away.");
        let no = DecisionPath::new("toy", vec![QueryResponse::new("There is a toy on the floor?", "NO")], "Do nothing.");
        let mut meta = Metadata::default();
        assert!(s.goals_for_environment(&[yes.clone(), no.clone()], &meta).is_empty());
        meta.insert("toy", "location", "floor");
        assert_eq!(s.goals_for_environment(&[yes, no], &meta), vec![Condition::equals("toy", "location", "in_box")]);
    }
}
