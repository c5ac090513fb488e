//! Behavior-plan derivation: decompose the task, identify uncertain factors
//! per subtask, generate one decision tree per subtask, then verify and
//! refine until the plans pass or the round budget runs out.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::plan::{
    normalize, parse_behavior_plan, serialize_behavior_plan, validate_tree_grounding, BehaviorPlanTree, PlanError,
    Rule, SubtaskSpec, TaskSpec, UncertainFactor, ValidationReport,
};
use crate::prompts;
use crate::provider::{Provider, ProviderError, ProviderRequest, RequestKind};

pub const DEFAULT_MAX_ROUNDS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum DeriveError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("plan verification still failing after {} round(s): {} violation(s)", .0.rounds_used, .0.verification.violations.len())]
    ExhaustedRounds(Box<DerivationResult>),
    #[error("max_rounds must be at least 1")]
    ZeroRounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivationResult {
    pub subtasks: Vec<SubtaskSpec>,
    /// One tree per subtask on success; subtasks whose plan never parsed are missing.
    pub trees: Vec<BehaviorPlanTree>,
    pub rounds_used: usize,
    pub verification: ValidationReport,
}

/// Persisted form of a derivation: subtasks plus the plan document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationRecord {
    pub subtasks: Vec<SubtaskSpec>,
    pub plan: Value,
    pub tree_subtasks: Vec<String>,
    pub rounds_used: usize,
    pub verification: ValidationReport,
}

impl DerivationResult {
    pub fn subtask_ids(&self) -> Vec<String> {
        self.subtasks.iter().map(|s| s.id.clone()).collect()
    }

    pub fn to_record(&self) -> DerivationRecord {
        let plan: Value = serde_json::from_str(&serialize_behavior_plan(self.trees.iter().map(|t| &t.root)))
            .expect("plan document is JSON");
        DerivationRecord {
            subtasks: self.subtasks.clone(),
            plan,
            tree_subtasks: self.trees.iter().map(|t| t.subtask_id.clone()).collect(),
            rounds_used: self.rounds_used,
            verification: self.verification.clone(),
        }
    }

    pub fn from_record(record: DerivationRecord) -> Result<Self, PlanError> {
        let roots = crate::plan::plan_from_value(&record.plan)?;
        if roots.len() != record.tree_subtasks.len() {
            return Err(PlanError::StructureError {
                location: String::new(),
                message: "plan and tree_subtasks lengths differ".into(),
            });
        }
        let trees = record
            .tree_subtasks
            .into_iter()
            .zip(roots)
            .map(|(id, root)| BehaviorPlanTree::new(id, root))
            .collect();
        Ok(Self { subtasks: record.subtasks, trees, rounds_used: record.rounds_used, verification: record.verification })
    }
}

/// One Independence violation per pair of subtasks sharing a normalized
/// factor name.
pub fn verify_independence(subtasks: &[SubtaskSpec]) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (pair, shared) in overlapping_pairs(subtasks) {
        let (a, b) = (&subtasks[pair.0].id, &subtasks[pair.1].id);
        report.push(
            Rule::Independence,
            format!("{a},{b}"),
            format!("subtasks `{a}` and `{b}` share uncertain factor(s): {}", shared.join(", ")),
        );
    }
    report
}

fn overlapping_pairs(subtasks: &[SubtaskSpec]) -> Vec<((usize, usize), Vec<String>)> {
    let names: Vec<BTreeSet<String>> = subtasks
        .iter()
        .map(|s| s.factors.iter().map(|f| normalize(&f.name)).collect())
        .collect();
    let mut out = Vec::new();
    for i in 0..subtasks.len() {
        for j in i + 1..subtasks.len() {
            let shared: Vec<String> = names[i].intersection(&names[j]).cloned().collect();
            if !shared.is_empty() {
                out.push(((i, j), shared));
            }
        }
    }
    out
}

/// Independence, then Syntax, then Grounding violations, each group in
/// subtask order.
pub fn verify_all(subtasks: &[SubtaskSpec], trees: &[BehaviorPlanTree]) -> ValidationReport {
    verify_with_parse_failures(subtasks, trees, &BTreeMap::new())
}

fn verify_with_parse_failures(
    subtasks: &[SubtaskSpec],
    trees: &[BehaviorPlanTree],
    parse_failures: &BTreeMap<String, String>,
) -> ValidationReport {
    let mut report = verify_independence(subtasks);
    let by_id: BTreeMap<&str, &BehaviorPlanTree> = trees.iter().map(|t| (t.subtask_id.as_str(), t)).collect();
    for subtask in subtasks {
        match (by_id.get(subtask.id.as_str()), parse_failures.get(&subtask.id)) {
            (_, Some(message)) => report.push(Rule::Syntax, format!("{}:", subtask.id), message.clone()),
            (Some(tree), None) => {
                for (location, message) in tree.root.structure_issues() {
                    report.push(Rule::Syntax, format!("{}:{location}", subtask.id), message);
                }
            }
            (None, None) => report.push(Rule::Syntax, format!("{}:", subtask.id), "no behavior plan for subtask"),
        }
    }
    for tree in trees {
        if let Some(subtask) = subtasks.iter().find(|s| s.id == tree.subtask_id) {
            if tree.root.structure_issues().is_empty() {
                report.extend(validate_tree_grounding(tree, &subtask.factors));
            }
        } else {
            report.push(Rule::Grounding, format!("{}:", tree.subtask_id), "tree belongs to no declared subtask");
        }
    }
    report
}

#[derive(Deserialize)]
struct DecomposeResponse {
    subtasks: Vec<SubtaskHead>,
}

#[derive(Serialize, Deserialize, Clone)]
struct SubtaskHead {
    id: String,
    summary: String,
}

#[derive(Deserialize)]
struct FactorsResponse {
    factors: Vec<UncertainFactor>,
}

fn format_error(kind: RequestKind, message: impl ToString) -> ProviderError {
    ProviderError::Format { kind, message: message.to_string() }
}

/// Drives the planner through the three derivation steps and the
/// verification/refinement loop.
pub fn derive<P: Provider + ?Sized>(
    provider: &mut P,
    task: &TaskSpec,
    max_rounds: usize,
) -> Result<DerivationResult, DeriveError> {
    if max_rounds == 0 {
        return Err(DeriveError::ZeroRounds);
    }
    let task_json = serde_json::to_value(task).expect("task serializes");
    let vars = [
        ("description", task.description.as_str()),
        ("environment_type", task.environment_type.as_str()),
    ];

    let request = ProviderRequest::new(
        RequestKind::Decompose,
        json!({"prompt": prompts::render(prompts::DECOMPOSE, &vars), "task": task_json}),
    );
    let heads: DecomposeResponse =
        serde_json::from_str(&provider.complete(&request)?).map_err(|e| format_error(RequestKind::Decompose, e))?;
    if heads.subtasks.is_empty() {
        return Err(format_error(RequestKind::Decompose, "no subtasks").into());
    }

    let mut factor_responses = Vec::with_capacity(heads.subtasks.len());
    for head in &heads.subtasks {
        let prompt = prompts::render(
            prompts::IDENTIFY_FACTORS,
            &[("description", &task.description), ("subtask_id", &head.id), ("subtask_summary", &head.summary)],
        );
        let request = ProviderRequest::new(
            RequestKind::IdentifyFactors,
            json!({"prompt": prompt, "task": task_json, "subtask": head}),
        );
        factor_responses.push(provider.complete(&request)?);
    }
    let mut subtasks = build_subtasks(&heads.subtasks, &factor_responses)?;

    let mut plan_responses = Vec::with_capacity(subtasks.len());
    for subtask in &subtasks {
        let factors = serde_json::to_value(&subtask.factors).expect("factors serialize");
        let prompt = prompts::render(
            prompts::GENERATE_PLAN,
            &[
                ("description", &task.description),
                ("subtask_id", &subtask.id),
                ("subtask_summary", &subtask.summary),
                ("factors", &factors.to_string()),
            ],
        );
        let request = ProviderRequest::new(
            RequestKind::GeneratePlan,
            json!({
                "prompt": prompt,
                "task": task_json,
                "subtask": {"id": subtask.id, "summary": subtask.summary},
                "factors": factors,
            }),
        );
        plan_responses.push(provider.complete(&request)?);
    }

    let mut round = 1;
    loop {
        let (trees, parse_failures) = parse_plans(&subtasks, &plan_responses);
        let verification = verify_with_parse_failures(&subtasks, &trees, &parse_failures);
        let result = DerivationResult { subtasks: subtasks.clone(), trees, rounds_used: round, verification };
        if result.verification.passed() {
            return Ok(result);
        }
        if round == max_rounds {
            return Err(DeriveError::ExhaustedRounds(Box::new(result)));
        }
        round += 1;

        let violations = serde_json::to_value(&result.verification.violations).expect("violations serialize");
        let violation_text = result
            .verification
            .violations
            .iter()
            .map(|v| format!("- [{:?}] {}: {}", v.rule, v.location, v.message))
            .collect::<Vec<_>>()
            .join("\n");

        let factor_targets: BTreeSet<usize> = overlapping_pairs(&subtasks).into_iter().map(|((_, j), _)| j).collect();
        for &i in &factor_targets {
            let response = refine(provider, "factors", &subtasks[i].id, &factor_responses[i], &violations, &violation_text)?;
            factor_responses[i] = response;
        }
        if !factor_targets.is_empty() {
            subtasks = build_subtasks(&heads.subtasks, &factor_responses)?;
        }

        let plan_targets: Vec<usize> = subtasks
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                let prefix = format!("{}:", s.id);
                result
                    .verification
                    .violations
                    .iter()
                    .any(|v| v.rule != Rule::Independence && v.location.starts_with(&prefix))
            })
            .map(|(i, _)| i)
            .collect();
        for i in plan_targets {
            let response = refine(provider, "plan", &subtasks[i].id, &plan_responses[i], &violations, &violation_text)?;
            plan_responses[i] = response;
        }
    }
}

fn refine<P: Provider + ?Sized>(
    provider: &mut P,
    stage: &str,
    subtask_id: &str,
    previous: &str,
    violations: &Value,
    violation_text: &str,
) -> Result<String, ProviderError> {
    let prompt = prompts::render(
        prompts::REFINE,
        &[("stage", stage), ("subtask_id", subtask_id), ("violations", violation_text), ("previous", previous)],
    );
    let request = ProviderRequest::new(
        RequestKind::Refine,
        json!({
            "prompt": prompt,
            "stage": stage,
            "subtask": subtask_id,
            "previous": previous,
            "violations": violations,
        }),
    );
    provider.complete(&request)
}

fn build_subtasks(heads: &[SubtaskHead], factor_responses: &[String]) -> Result<Vec<SubtaskSpec>, ProviderError> {
    heads
        .iter()
        .zip(factor_responses)
        .map(|(head, response)| {
            let parsed: FactorsResponse =
                serde_json::from_str(response).map_err(|e| format_error(RequestKind::IdentifyFactors, e))?;
            let subtask = SubtaskSpec { id: head.id.clone(), summary: head.summary.clone(), factors: parsed.factors };
            subtask.validate().map_err(|e| format_error(RequestKind::IdentifyFactors, e))?;
            Ok(subtask)
        })
        .collect()
}

/// Plan responses are a one-element plan document (or a bare query object).
fn parse_plans(subtasks: &[SubtaskSpec], responses: &[String]) -> (Vec<BehaviorPlanTree>, BTreeMap<String, String>) {
    let mut trees = Vec::new();
    let mut failures = BTreeMap::new();
    for (subtask, response) in subtasks.iter().zip(responses) {
        let document = match serde_json::from_str::<Value>(response) {
            Ok(Value::Object(map)) => Value::Array(vec![Value::Object(map)]).to_string(),
            _ => response.clone(),
        };
        match parse_behavior_plan(&document) {
            Ok(mut roots) if roots.len() == 1 => trees.push(BehaviorPlanTree::new(subtask.id.clone(), roots.remove(0))),
            Ok(roots) => {
                failures.insert(subtask.id.clone(), format!("expected one tree, got {}", roots.len()));
            }
            Err(e) => {
                failures.insert(subtask.id.clone(), e.to_string());
            }
        }
    }
    (trees, failures)
}
