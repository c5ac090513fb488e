//! Tasks, subtasks, uncertain factors and decision-tree behavior plans.
//!
//! A behavior plan document is a JSON list of single-key objects. The key is
//! an environment query, the value maps each response either to a leaf action
//! string or to another single-key query object:
//!
//! ```json
//! [{"There is a book on the floor?": {"YES": "Place the book on the sofa.", "NO": "Do nothing."}}]
//! ```
//!
//! Branch order is the declaration order in the document and every
//! downstream ordering (DFS paths, Cartesian trajectories) derives from it.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PlanError {
    #[error("malformed plan document: {0}")]
    MalformedDocument(String),
    #[error("structure error at {location}: {message}")]
    StructureError { location: String, message: String },
    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },
}

/// Lowercase, turn `_`/`-`/whitespace into single spaces and drop every other
/// non-alphanumeric character.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(ch.to_lowercase());
        } else if ch.is_whitespace() || ch == '_' || ch == '-' {
            pending_space = true;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub description: String,
    pub environment_type: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub goal_hints: Vec<String>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.id.trim().is_empty() {
            return Err(invalid("task", "id is empty"));
        }
        if self.description.trim().is_empty() {
            return Err(invalid("task", "description is empty"));
        }
        Ok(())
    }
}

/// A logic variable of the environment together with its finite domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncertainFactor {
    pub name: String,
    pub domain: Vec<String>,
    /// Extra phrases that ground a query in this factor.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl UncertainFactor {
    pub fn validate(&self) -> Result<(), PlanError> {
        if normalize(&self.name).is_empty() {
            return Err(invalid("factor", "name is empty"));
        }
        if self.domain.len() < 2 {
            return Err(invalid(
                "factor",
                format!("`{}` needs at least two domain values", self.name),
            ));
        }
        let mut seen = BTreeSet::new();
        for value in &self.domain {
            if !seen.insert(normalize(value)) {
                return Err(invalid(
                    "factor",
                    format!("`{}` repeats domain value `{value}`", self.name),
                ));
            }
        }
        Ok(())
    }

    fn needles(&self) -> impl Iterator<Item = String> + '_ {
        std::iter::once(normalize(&self.name))
            .chain(self.aliases.iter().map(|a| normalize(a)))
            .filter(|n| !n.is_empty())
    }

    pub fn contains_value(&self, response: &str) -> bool {
        let response = normalize(response);
        self.domain.iter().any(|d| normalize(d) == response)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub id: String,
    pub summary: String,
    #[serde(default)]
    pub factors: Vec<UncertainFactor>,
}

impl SubtaskSpec {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.id.trim().is_empty() || self.id.contains('/') || self.id.contains('&') {
            return Err(invalid(
                "subtask",
                format!("id `{}` must be non-empty without `/` or `&`", self.id),
            ));
        }
        let mut names = BTreeSet::new();
        for factor in &self.factors {
            factor.validate()?;
            if !names.insert(normalize(&factor.name)) {
                return Err(invalid(
                    "subtask",
                    format!("`{}` declares factor `{}` twice", self.id, factor.name),
                ));
            }
        }
        Ok(())
    }
}

fn invalid(what: &'static str, message: impl Into<String>) -> PlanError {
    PlanError::Invalid { what, message: message.into() }
}

/// A node of a behavior plan: either an environment query with ordered
/// response branches, or a leaf action plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanNode {
    Query { query: String, branches: Vec<(String, PlanNode)> },
    Leaf(String),
}

impl PlanNode {
    pub fn leaf_count(&self) -> usize {
        match self {
            PlanNode::Leaf(_) => 1,
            PlanNode::Query { branches, .. } => branches.iter().map(|(_, n)| n.leaf_count()).sum(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            PlanNode::Leaf(_) => 0,
            PlanNode::Query { branches, .. } => {
                1 + branches.iter().map(|(_, n)| n.depth()).max().unwrap_or(0)
            }
        }
    }

    /// Re-runs the structural checks that parsing enforces, for trees that
    /// were built programmatically. Returns `(location, message)` pairs.
    pub fn structure_issues(&self) -> Vec<(String, String)> {
        let mut issues = Vec::new();
        collect_structure_issues(self, String::new(), &mut issues);
        issues
    }

    pub fn to_value(&self) -> Value {
        match self {
            PlanNode::Leaf(action) => Value::String(action.clone()),
            PlanNode::Query { query, branches } => {
                let mut inner = Map::new();
                for (response, child) in branches {
                    inner.insert(response.clone(), child.to_value());
                }
                let mut outer = Map::new();
                outer.insert(query.clone(), Value::Object(inner));
                Value::Object(outer)
            }
        }
    }
}

fn collect_structure_issues(node: &PlanNode, location: String, out: &mut Vec<(String, String)>) {
    let PlanNode::Query { query, branches } = node else {
        return;
    };
    let here = format!("{location}/{}", escape_pointer(query));
    if normalize(query).is_empty() {
        out.push((here.clone(), "empty query text".into()));
    }
    if branches.len() < 2 {
        out.push((
            here.clone(),
            format!("query has {} branch(es); at least 2 required", branches.len()),
        ));
    }
    let mut seen = BTreeSet::new();
    for (response, child) in branches {
        let at = format!("{here}/{}", escape_pointer(response));
        if normalize(response).is_empty() {
            out.push((at.clone(), "empty response text".into()));
        } else if !seen.insert(normalize(response)) {
            out.push((at.clone(), format!("duplicate response `{response}`")));
        }
        collect_structure_issues(child, at, out);
    }
}

fn escape_pointer(segment: &str) -> String {
    segment.replace('~', "~0").replace('/', "~1")
}

/// The decision tree belonging to one subtask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorPlanTree {
    pub subtask_id: String,
    pub root: PlanNode,
}

impl BehaviorPlanTree {
    pub fn new(subtask_id: impl Into<String>, root: PlanNode) -> Self {
        Self { subtask_id: subtask_id.into(), root }
    }
}

/// Parses a plan document into one root node per top-level list element.
pub fn parse_behavior_plan(document: &str) -> Result<Vec<PlanNode>, PlanError> {
    let value: Value = serde_json::from_str(document)
        .map_err(|e| PlanError::MalformedDocument(e.to_string()))?;
    plan_from_value(&value)
}

pub fn plan_from_value(value: &Value) -> Result<Vec<PlanNode>, PlanError> {
    let Value::Array(items) = value else {
        return Err(structure("", "plan document must be a list"));
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| parse_node(item, format!("/{i}")))
        .collect()
}

/// Parses plan documents and attaches subtask ids in order.
pub fn parse_plan_trees(document: &str, subtask_ids: &[String]) -> Result<Vec<BehaviorPlanTree>, PlanError> {
    let roots = parse_behavior_plan(document)?;
    if roots.len() != subtask_ids.len() {
        return Err(structure(
            "",
            format!("{} trees for {} subtasks", roots.len(), subtask_ids.len()),
        ));
    }
    Ok(subtask_ids
        .iter()
        .zip(roots)
        .map(|(id, root)| BehaviorPlanTree::new(id.clone(), root))
        .collect())
}

fn structure(location: &str, message: impl Into<String>) -> PlanError {
    PlanError::StructureError { location: location.to_string(), message: message.into() }
}

fn parse_node(value: &Value, location: String) -> Result<PlanNode, PlanError> {
    match value {
        Value::String(action) => Ok(PlanNode::Leaf(action.clone())),
        Value::Object(map) => {
            if map.len() != 1 {
                return Err(structure(
                    &location,
                    format!("query object must have exactly one key, found {}", map.len()),
                ));
            }
            let (query, body) = map.iter().next().expect("one entry");
            let here = format!("{location}/{}", escape_pointer(query));
            if normalize(query).is_empty() {
                return Err(structure(&here, "empty query text"));
            }
            let Value::Object(responses) = body else {
                return Err(structure(&here, "query value must map responses to subtrees"));
            };
            if responses.len() < 2 {
                return Err(structure(
                    &here,
                    format!("query has {} branch(es); at least 2 required", responses.len()),
                ));
            }
            let mut seen = BTreeSet::new();
            let mut branches = Vec::with_capacity(responses.len());
            for (response, child) in responses {
                let at = format!("{here}/{}", escape_pointer(response));
                if normalize(response).is_empty() {
                    return Err(structure(&at, "empty response text"));
                }
                if !seen.insert(normalize(response)) {
                    return Err(structure(&at, format!("duplicate response `{response}`")));
                }
                branches.push((response.clone(), parse_node(child, at)?));
            }
            Ok(PlanNode::Query { query: query.clone(), branches })
        }
        other => Err(structure(
            &location,
            format!("expected action string or query object, found {}", json_kind(other)),
        )),
    }
}

fn json_kind(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "object",
    }
}

pub fn serialize_behavior_plan<'a>(roots: impl IntoIterator<Item = &'a PlanNode>) -> String {
    let list = Value::Array(roots.into_iter().map(PlanNode::to_value).collect());
    serde_json::to_string_pretty(&list).expect("plan serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    Independence,
    Syntax,
    Grounding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub location: String,
    pub message: String,
}

/// Outcome of the plan checks; no violations means pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, rule: Rule, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { rule, location: location.into(), message: message.into() });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }
}

/// Resolves the factor a query is grounded in. Among factors whose name or
/// alias occurs in the query, those whose domain covers every response are
/// preferred; then the longest match wins. Equal-length matches on different
/// factors are ambiguous.
pub fn ground_query<'f>(
    query: &str,
    responses: &[&str],
    factors: &'f [UncertainFactor],
) -> Result<&'f UncertainFactor, Vec<&'f str>> {
    let text = normalize(query);
    let matches: Vec<(usize, &UncertainFactor)> = factors
        .iter()
        .filter_map(|f| Some((f.needles().filter(|n| text.contains(n.as_str())).map(|n| n.len()).max()?, f)))
        .collect();
    let covering: Vec<(usize, &UncertainFactor)> =
        matches.iter().copied().filter(|(_, f)| responses.iter().all(|r| f.contains_value(r))).collect();
    let pool = if covering.is_empty() { matches } else { covering };
    let Some(longest) = pool.iter().map(|(len, _)| *len).max() else {
        return Err(Vec::new());
    };
    let best: Vec<&UncertainFactor> = pool.into_iter().filter(|(len, _)| *len == longest).map(|(_, f)| f).collect();
    match best.as_slice() {
        [only] => Ok(only),
        _ => Err(best.iter().map(|f| f.name.as_str()).collect()),
    }
}

/// Checks that every query node is grounded in exactly one factor and that
/// its responses lie in that factor's domain.
pub fn validate_tree_grounding(tree: &BehaviorPlanTree, factors: &[UncertainFactor]) -> ValidationReport {
    let mut report = ValidationReport::default();
    walk_grounding(&tree.root, format!("{}:", tree.subtask_id), factors, &mut report);
    report
}

fn walk_grounding(node: &PlanNode, location: String, factors: &[UncertainFactor], report: &mut ValidationReport) {
    let PlanNode::Query { query, branches } = node else {
        return;
    };
    let here = format!("{location}/{}", escape_pointer(query));
    let responses: Vec<&str> = branches.iter().map(|(r, _)| r.as_str()).collect();
    match ground_query(query, &responses, factors) {
        Ok(factor) => {
            for (response, _) in branches {
                if !factor.contains_value(response) {
                    report.push(
                        Rule::Grounding,
                        format!("{here}/{}", escape_pointer(response)),
                        format!("response `{response}` is outside the domain of factor `{}`", factor.name),
                    );
                }
            }
        }
        Err(tied) if tied.is_empty() => {
            report.push(Rule::Grounding, here.clone(), format!("query `{query}` matches no uncertain factor"));
        }
        Err(tied) => {
            report.push(
                Rule::Grounding,
                here.clone(),
                format!("query `{query}` matches several factors: {}", tied.join(", ")),
            );
        }
    }
    for (response, child) in branches {
        walk_grounding(child, format!("{here}/{}", escape_pointer(response)), factors, report);
    }
}

/// One atomic condition: the answer `response` to environment query `query`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QueryResponse {
    pub query: String,
    pub response: String,
}

impl QueryResponse {
    pub fn new(query: impl Into<String>, response: impl Into<String>) -> Self {
        Self { query: query.into(), response: response.into() }
    }

    /// `normalized query=normalized response`
    pub fn key(&self) -> String {
        format!("{}={}", normalize(&self.query), normalize(&self.response))
    }
}

/// A root-to-leaf path through one subtask's plan; the constraint unit used
/// for trajectory selection and coverage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionPath {
    pub subtask_id: String,
    pub steps: Vec<QueryResponse>,
    pub leaf_action: String,
    pub path_id: String,
}

impl DecisionPath {
    pub fn new(subtask_id: impl Into<String>, steps: Vec<QueryResponse>, leaf_action: impl Into<String>) -> Self {
        let subtask_id = subtask_id.into();
        let path_id = path_id(&subtask_id, &steps);
        Self { subtask_id, steps, leaf_action: leaf_action.into(), path_id }
    }
}

pub fn path_id(subtask_id: &str, steps: &[QueryResponse]) -> String {
    let joined: Vec<String> = steps.iter().map(QueryResponse::key).collect();
    format!("{subtask_id}/{}", joined.join(";"))
}

/// All root-to-leaf paths in DFS order, branches visited in declaration order.
pub fn extract_paths(tree: &BehaviorPlanTree) -> Vec<DecisionPath> {
    let mut out = Vec::with_capacity(tree.root.leaf_count());
    let mut steps = Vec::new();
    dfs(&tree.subtask_id, &tree.root, &mut steps, &mut out);
    out
}

fn dfs(subtask_id: &str, node: &PlanNode, steps: &mut Vec<QueryResponse>, out: &mut Vec<DecisionPath>) {
    match node {
        PlanNode::Leaf(action) => out.push(DecisionPath::new(subtask_id, steps.clone(), action.clone())),
        PlanNode::Query { query, branches } => {
            for (response, child) in branches {
                steps.push(QueryResponse::new(query.clone(), response.clone()));
                dfs(subtask_id, child, steps, out);
                steps.pop();
            }
        }
    }
}

/// One decision path per subtask: a complete potential task situation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalTrajectory {
    pub trajectory_id: String,
    pub paths: Vec<DecisionPath>,
}

impl LogicalTrajectory {
    pub fn new(paths: Vec<DecisionPath>) -> Self {
        let trajectory_id = trajectory_id(paths.iter().map(|p| p.path_id.as_str()));
        Self { trajectory_id, paths }
    }

    pub fn path_ids(&self) -> impl Iterator<Item = &str> {
        self.paths.iter().map(|p| p.path_id.as_str())
    }

    pub fn steps(&self) -> impl Iterator<Item = &QueryResponse> {
        self.paths.iter().flat_map(|p| p.steps.iter())
    }

    /// Checks one path per subtask, in the given subtask order.
    pub fn validate(&self, subtask_ids: &[String]) -> Result<(), PlanError> {
        let ids: Vec<&str> = self.paths.iter().map(|p| p.subtask_id.as_str()).collect();
        let expected: Vec<&str> = subtask_ids.iter().map(String::as_str).collect();
        if ids != expected {
            return Err(invalid("trajectory", format!("covers subtasks {ids:?}, expected {expected:?}")));
        }
        Ok(())
    }
}

pub fn trajectory_id<'a>(path_ids: impl IntoIterator<Item = &'a str>) -> String {
    path_ids.into_iter().collect::<Vec<_>>().join(" & ")
}

impl fmt::Display for LogicalTrajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.trajectory_id)
    }
}
