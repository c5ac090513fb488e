//! Behavior-tree policies as stored on disk.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::task::{read_json, Condition, TaskError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyLabel {
    Correct,
    Counterfactuals,
    Unreachable,
    Lackbranch,
}

impl PolicyLabel {
    pub const FAULTY: [PolicyLabel; 3] = [Self::Counterfactuals, Self::Unreachable, Self::Lackbranch];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Correct => "correct",
            Self::Counterfactuals => "counterfactuals",
            Self::Unreachable => "unreachable",
            Self::Lackbranch => "lackbranch",
        }
    }
}

impl fmt::Display for PolicyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BtNode {
    Sequence { children: Vec<BtNode> },
    Selector { children: Vec<BtNode> },
    Condition { predicate: Condition },
    Action {
        name: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

impl BtNode {
    pub fn sequence(children: Vec<BtNode>) -> Self {
        Self::Sequence { children }
    }

    pub fn selector(children: Vec<BtNode>) -> Self {
        Self::Selector { children }
    }

    pub fn condition(predicate: Condition) -> Self {
        Self::Condition { predicate }
    }

    pub fn action(name: &str, args: &[&str]) -> Self {
        Self::Action { name: name.into(), args: args.iter().map(|a| a.to_string()).collect() }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Self::Sequence { children } | Self::Selector { children } => 1 + children.iter().map(Self::node_count).sum::<usize>(),
            _ => 1,
        }
    }

    /// Short label used in traces.
    pub fn label(&self) -> String {
        match self {
            Self::Sequence { .. } => "sequence".into(),
            Self::Selector { .. } => "selector".into(),
            Self::Condition { predicate } => format!("condition {predicate}"),
            Self::Action { name, args } => format!("action {name}({})", args.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorTreePolicy {
    pub id: String,
    /// Ground truth for scoring only; never read by the executor.
    pub label: PolicyLabel,
    pub root: BtNode,
}

impl BehaviorTreePolicy {
    pub fn load(path: &Path) -> Result<Self, TaskError> {
        read_json(path)
    }

    /// Every `*.json` in `dir`, sorted by file name.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>, TaskError> {
        let entries = std::fs::read_dir(dir).map_err(|e| TaskError::Io { path: dir.to_path_buf(), message: e.to_string() })?;
        let mut paths: Vec<_> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(|p| Self::load(p)).collect()
    }
}
