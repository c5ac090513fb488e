//! Executes behavior-tree policies against the abstract state of an
//! environment and scores how many faulty policies the environments expose.

pub mod bt;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{EnvironmentSpec, Metadata, PRESENT};
use crate::plan::DecisionPath;
use crate::task::{read_json, Condition, TaskError, TaskSchema};
pub use bt::{BehaviorTreePolicy, BtNode, PolicyLabel};

pub const DEFAULT_BUDGET: u64 = 1000;
pub const AGENT: &str = "agent";
pub const NOTHING: &str = "none";
pub const START: &str = "start";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("environment `{environment}` lacks {entity}.{attribute} required by the task schema")]
    SchemaMismatch { environment: String, entity: String, attribute: String },
    #[error("no goal is defined for leaf action `{0}`")]
    UnknownLeaf(String),
    #[error("tick budget must be at least 1")]
    InvalidBudget,
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("policy `{0}` is not labeled correct")]
    NotCorrectPolicy(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Precondition {
    #[serde(flatten)]
    pub condition: Condition,
    /// Violating it is a real-world causal error rather than a plain failure.
    #[serde(default)]
    pub causal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effect {
    pub entity: String,
    pub attribute: String,
    pub value: String,
}

/// Entity, attribute and value strings may contain `{param}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDef {
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default)]
    pub preconditions: Vec<Precondition>,
    #[serde(default)]
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionModel {
    /// Attributes effects may write.
    pub attributes: BTreeSet<String>,
    pub actions: BTreeMap<String, ActionDef>,
}

impl ActionModel {
    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let model: Self = read_json(path)?;
        model.validate().map_err(|message| TaskError::Parse { path: path.to_path_buf(), message })?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, action) in &self.actions {
            if let Some(e) = action.effects.iter().find(|e| !self.attributes.contains(&e.attribute)) {
                return Err(format!("action `{name}` writes undeclared attribute `{}`", e.attribute));
            }
        }
        Ok(())
    }
}

fn bind(template: &str, params: &[String], args: &[String]) -> String {
    let mut out = template.to_string();
    for (p, a) in params.iter().zip(args) {
        out = out.replace(&format!("{{{p}}}"), a);
    }
    out
}

fn bind_condition(c: &Condition, params: &[String], args: &[String]) -> Condition {
    Condition {
        entity: bind(&c.entity, params, args),
        attribute: bind(&c.attribute, params, args),
        equals: c.equals.as_deref().map(|v| bind(v, params, args)),
        not_equals: c.not_equals.as_deref().map(|v| bind(v, params, args)),
    }
}

/// Entity attributes during one run, including the agent's `held` and
/// `location`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState(pub Metadata);

impl WorldState {
    pub fn value(&self, entity: &str, attribute: &str) -> &str {
        self.0.value(entity, attribute)
    }

    pub fn holds(&self, condition: &Condition) -> bool {
        condition.holds(&self.0)
    }

    pub fn held(&self) -> &str {
        self.value(AGENT, "held")
    }
}

/// Mirrors the environment metadata and puts an empty-handed agent at the
/// start. Present entities must carry every attribute the schema requires.
pub fn init_state(env: &EnvironmentSpec, schema: &TaskSchema) -> Result<WorldState, SimError> {
    let meta = &env.metadata;
    for (entity, attributes) in &schema.required_attributes {
        if meta.value(entity, "presence") != PRESENT {
            continue;
        }
        if let Some(attribute) = attributes.iter().find(|a| meta.get(entity, a).is_none()) {
            return Err(SimError::SchemaMismatch {
                environment: env.id.clone(),
                entity: entity.clone(),
                attribute: attribute.clone(),
            });
        }
    }
    let mut state = meta.clone();
    state.insert(AGENT, "held", NOTHING);
    state.insert(AGENT, "location", START);
    Ok(WorldState(state))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    CausalViolation { action: String, precondition: Condition },
    GoalUnreached { missing: Vec<Condition> },
    ExecutorError { message: String },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Self::Pass)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::CausalViolation { .. } => "causal_violation",
            Self::GoalUnreached { .. } => "goal_unreached",
            Self::ExecutorError { .. } => "executor_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Success,
    Failure,
    Violation,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Child indices from the root, dot-separated; the root is `0`.
    pub node: String,
    pub label: String,
    pub status: NodeStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub policy: String,
    pub environment: String,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub ticks: u64,
    pub trace: Vec<TraceEntry>,
}

/// What the executor needs from the task.
#[derive(Debug, Clone, Copy)]
pub struct SimTask<'a> {
    pub schema: &'a TaskSchema,
    pub actions: &'a ActionModel,
    /// All ground-truth decision paths; used when an environment does not
    /// record its own trajectory.
    pub ground_truth: &'a [DecisionPath],
}

impl SimTask<'_> {
    /// End-state goals for an environment: the leaf goals of the paths of its
    /// trajectory.
    pub fn goals(&self, env: &EnvironmentSpec) -> Result<Vec<Condition>, SimError> {
        if env.trajectory_paths.is_empty() {
            return Ok(self.schema.goals_for_environment(self.ground_truth, &env.metadata));
        }
        let mut goals: Vec<Condition> = Vec::new();
        for path in &env.trajectory_paths {
            let leaf = self.schema.goals_for(&path.leaf_action).ok_or_else(|| SimError::UnknownLeaf(path.leaf_action.clone()))?;
            for g in leaf {
                if !goals.contains(g) {
                    goals.push(g.clone());
                }
            }
        }
        Ok(goals)
    }
}

enum Halt {
    Causal { action: String, precondition: Condition },
    Budget,
    Error(String),
}

struct Executor<'a> {
    actions: &'a ActionModel,
    state: WorldState,
    ticks: u64,
    budget: u64,
    trace: Vec<TraceEntry>,
}

impl Executor<'_> {
    fn record(&mut self, node: &str, label: String, status: NodeStatus) {
        self.trace.push(TraceEntry { node: node.to_string(), label, status });
    }

    fn tick(&mut self, node: &BtNode, id: &str) -> Result<bool, Halt> {
        if self.ticks == self.budget {
            return Err(Halt::Budget);
        }
        self.ticks += 1;
        let result = match node {
            BtNode::Sequence { children } | BtNode::Selector { children } => {
                if children.is_empty() {
                    self.record(id, node.label(), NodeStatus::Error);
                    return Err(Halt::Error(format!("{} at {id} has no children", node.label())));
                }
                let want = matches!(node, BtNode::Selector { .. });
                let mut outcome = !want;
                for (i, child) in children.iter().enumerate() {
                    if self.tick(child, &format!("{id}.{i}"))? == want {
                        outcome = want;
                        break;
                    }
                }
                outcome
            }
            BtNode::Condition { predicate } => {
                if predicate.equals.is_none() && predicate.not_equals.is_none() {
                    self.record(id, node.label(), NodeStatus::Error);
                    return Err(Halt::Error(format!("condition at {id} has no test")));
                }
                self.state.holds(predicate)
            }
            BtNode::Action { name, args } => self.act(id, node, name, args)?,
        };
        self.record(id, node.label(), if result { NodeStatus::Success } else { NodeStatus::Failure });
        Ok(result)
    }

    fn act(&mut self, id: &str, node: &BtNode, name: &str, args: &[String]) -> Result<bool, Halt> {
        let Some(def) = self.actions.actions.get(name) else {
            self.record(id, node.label(), NodeStatus::Error);
            return Err(Halt::Error(format!("unknown action `{name}`")));
        };
        if def.params.len() != args.len() {
            self.record(id, node.label(), NodeStatus::Error);
            return Err(Halt::Error(format!("`{name}` takes {} arguments, got {}", def.params.len(), args.len())));
        }
        for pre in &def.preconditions {
            let condition = bind_condition(&pre.condition, &def.params, args);
            if self.state.holds(&condition) {
                continue;
            }
            if pre.causal {
                self.record(id, node.label(), NodeStatus::Violation);
                return Err(Halt::Causal { action: node.label().trim_start_matches("action ").to_string(), precondition: condition });
            }
            return Ok(false);
        }
        for effect in &def.effects {
            let entity = bind(&effect.entity, &def.params, args);
            let value = bind(&effect.value, &def.params, args);
            self.state.0.insert(&entity, &effect.attribute, value);
        }
        let held = self.state.held().to_string();
        if held != NOTHING && self.state.value(&held, "presence") != PRESENT {
            self.record(id, node.label(), NodeStatus::Error);
            return Err(Halt::Error(format!("agent holds `{held}`, which is not in the scene")));
        }
        Ok(true)
    }
}

/// Ticks the tree once from the root. Pass requires the tree to succeed and
/// every goal to hold afterwards.
pub fn run(policy: &BehaviorTreePolicy, env: &EnvironmentSpec, task: &SimTask<'_>, budget: u64) -> Result<SimOutcome, SimError> {
    if budget == 0 {
        return Err(SimError::InvalidBudget);
    }
    let state = init_state(env, task.schema)?;
    let goals = task.goals(env)?;
    let mut exec = Executor { actions: task.actions, state, ticks: 0, budget, trace: Vec::new() };
    let result = exec.tick(&policy.root, "0");
    let missing = |state: &WorldState| goals.iter().filter(|g| !state.holds(g)).cloned().collect::<Vec<_>>();
    let verdict = match result {
        Ok(true) => {
            let missing = missing(&exec.state);
            if missing.is_empty() {
                Verdict::Pass
            } else {
                Verdict::GoalUnreached { missing }
            }
        }
        Ok(false) | Err(Halt::Budget) => Verdict::GoalUnreached { missing: missing(&exec.state) },
        Err(Halt::Causal { action, precondition }) => Verdict::CausalViolation { action, precondition },
        Err(Halt::Error(message)) => Verdict::ExecutorError { message },
    };
    Ok(SimOutcome { policy: policy.id.clone(), environment: env.id.clone(), verdict, ticks: exec.ticks, trace: exec.trace })
}

pub const LACKS_TASK_OBJECTS: &str = "lacks task-related objects";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidEnvironment {
    pub environment: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    /// Percentage of valid environments.
    pub rate: f64,
    pub valid: Vec<String>,
    pub invalid: Vec<InvalidEnvironment>,
    pub outcomes: Vec<SimOutcome>,
}

fn invalid_reason(outcome: &Result<SimOutcome, SimError>, env: &EnvironmentSpec, schema: &TaskSchema) -> Option<String> {
    if schema.required_objects.iter().any(|o| env.metadata.value(o, "presence") != PRESENT) {
        return Some(LACKS_TASK_OBJECTS.into());
    }
    let unmet = schema.unmet_steps(env.trajectory_paths.iter().flat_map(|p| &p.steps), &env.metadata);
    if let Some(step) = unmet.first() {
        return Some(format!("contradicts its trajectory at `{} {}`", step.query, step.response));
    }
    match outcome {
        Ok(o) if o.verdict.is_pass() => None,
        Ok(o) => Some(format!("correct policy ends in {}", o.verdict.name())),
        Err(e) => Some(e.to_string()),
    }
}

/// An environment is valid when it has the task objects, agrees with its
/// trajectory and the correct policy passes in it.
pub fn scenario_validity(
    correct: &BehaviorTreePolicy,
    envs: &[EnvironmentSpec],
    task: &SimTask<'_>,
    budget: u64,
) -> Result<ValidityReport, SimError> {
    if correct.label != PolicyLabel::Correct {
        return Err(SimError::NotCorrectPolicy(correct.id.clone()));
    }
    if envs.is_empty() {
        return Err(SimError::EmptyInput);
    }
    let runs: Vec<_> = envs.par_iter().map(|env| run(correct, env, task, budget)).collect();
    let mut report = ValidityReport { rate: 0.0, valid: Vec::new(), invalid: Vec::new(), outcomes: Vec::new() };
    for (env, outcome) in envs.iter().zip(runs) {
        match invalid_reason(&outcome, env, task.schema) {
            None => report.valid.push(env.id.clone()),
            Some(reason) => report.invalid.push(InvalidEnvironment { environment: env.id.clone(), reason }),
        }
        if let Ok(o) = outcome {
            report.outcomes.push(o);
        }
    }
    report.rate = 100.0 * report.valid.len() as f64 / envs.len() as f64;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDetection {
    pub policy: String,
    pub label: PolicyLabel,
    pub detected: bool,
    pub outcomes: Vec<SimOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryRate {
    pub detected: usize,
    pub total: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub per_category: BTreeMap<PolicyLabel, CategoryRate>,
    /// Mean of the category rates; `None` when there are no faulty policies.
    pub average: Option<f64>,
    pub policies: Vec<PolicyDetection>,
}

impl FaultReport {
    pub fn from_detections(policies: Vec<PolicyDetection>) -> Self {
        let mut per_category: BTreeMap<PolicyLabel, CategoryRate> = BTreeMap::new();
        for p in &policies {
            let entry = per_category.entry(p.label).or_insert(CategoryRate { detected: 0, total: 0, rate: 0.0 });
            entry.total += 1;
            entry.detected += usize::from(p.detected);
        }
        for rate in per_category.values_mut() {
            rate.rate = 100.0 * rate.detected as f64 / rate.total as f64;
        }
        let average = (!per_category.is_empty())
            .then(|| per_category.values().map(|r| r.rate).sum::<f64>() / per_category.len() as f64);
        Self { per_category, average, policies }
    }
}

/// A faulty policy is detected when some valid environment does not let it
/// pass.
pub fn fault_detection_rate(
    faulty: &[BehaviorTreePolicy],
    valid_envs: &[EnvironmentSpec],
    task: &SimTask<'_>,
    budget: u64,
) -> Result<FaultReport, SimError> {
    if valid_envs.is_empty() {
        return Err(SimError::EmptyInput);
    }
    let pairs: Vec<(usize, usize)> = (0..faulty.len()).flat_map(|p| (0..valid_envs.len()).map(move |e| (p, e))).collect();
    let outcomes = pairs
        .par_iter()
        .map(|&(p, e)| run(&faulty[p], &valid_envs[e], task, budget))
        .collect::<Result<Vec<_>, _>>()?;
    let mut chunks = outcomes.chunks(valid_envs.len().max(1));
    let mut policies = Vec::with_capacity(faulty.len());
    for policy in faulty {
        let outcomes = chunks.next().map(<[SimOutcome]>::to_vec).unwrap_or_default();
        let detected = outcomes.iter().any(|o| !o.verdict.is_pass());
        policies.push(PolicyDetection { policy: policy.id.clone(), label: policy.label, detected, outcomes });
    }
    Ok(FaultReport::from_detections(policies))
}

/// Output of the simulation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResults {
    pub correct_policy: String,
    /// `None` when there were no environments to run.
    pub validity: Option<ValidityReport>,
    /// `None` when no environment was valid.
    pub faults: Option<FaultReport>,
}
