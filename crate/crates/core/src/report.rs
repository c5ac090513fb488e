//! Aggregates stage outputs into the run report and renders it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentSpec;
use crate::metrics::{logic_coverage_atomic, logic_coverage_detail, Coverage};
use crate::physics::{pass_rate, PhysicsPassRate, PhysicsReport};
use crate::plan::{extract_paths, BehaviorPlanTree};
use crate::scene::BuildFailure;
use crate::sim::{CategoryRate, PolicyLabel, SimulationResults};
use crate::task::TaskSchema;
use crate::trajectory::{cartesian_trajectories, jaccard_index, minimal_trajectory_selection, TrajectorySetDoc};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("no output from the {0} stage")]
    MissingStage(&'static str),
}

#[derive(Debug, Clone, Copy)]
pub struct StageOutputs<'a> {
    pub task_id: &'a str,
    pub schema: &'a TaskSchema,
    pub ground_truth: &'a [BehaviorPlanTree],
    pub full: Option<&'a TrajectorySetDoc>,
    pub minimal: Option<&'a TrajectorySetDoc>,
    pub environments: Option<&'a [EnvironmentSpec]>,
    pub build_failures: &'a [BuildFailure],
    pub physics: Option<&'a [PhysicsReport]>,
    pub simulation: Option<&'a SimulationResults>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentRow {
    pub environment: String,
    pub trajectory_id: String,
    pub floor_plan: bool,
    pub entity: bool,
    pub relation: bool,
    /// `None` when the correct policy was not run here.
    pub valid: Option<bool>,
    pub invalid_reason: Option<String>,
    /// Verdict name per policy id.
    pub verdicts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task_id: String,
    pub trajectories_full: usize,
    pub trajectories_minimal: usize,
    pub environments: usize,
    pub build_failures: Vec<BuildFailure>,
    /// Path-level coverage as a fraction; `None` without ground truth.
    pub logic_coverage: Option<Coverage>,
    pub logic_coverage_atomic: Option<Coverage>,
    /// Percentages; `None` without environments.
    pub physics_pass_rate: Option<PhysicsPassRate>,
    /// Percentage; `None` when not applicable.
    pub scenario_validity: Option<f64>,
    pub fault_detection: BTreeMap<PolicyLabel, CategoryRate>,
    pub fault_detection_average: Option<f64>,
    /// Against the minimal set of the ground-truth plans.
    pub jaccard_index: Option<f64>,
    pub detail: Vec<EnvironmentRow>,
}

fn ground_truth_minimal(trees: &[BehaviorPlanTree]) -> Option<BTreeSet<String>> {
    if trees.is_empty() {
        return None;
    }
    let sets: Vec<_> = trees.iter().map(extract_paths).collect();
    let full: Vec<_> = cartesian_trajectories(&sets).ok()?.collect();
    Some(minimal_trajectory_selection(&full).into_iter().map(|t| t.trajectory_id).collect())
}

pub fn build_report(outputs: &StageOutputs<'_>) -> Result<RunReport, ReportError> {
    let full = outputs.full.ok_or(ReportError::MissingStage("collect"))?;
    let minimal = outputs.minimal.ok_or(ReportError::MissingStage("collect"))?;
    let envs = outputs.environments.ok_or(ReportError::MissingStage("build"))?;
    let physics = outputs.physics.ok_or(ReportError::MissingStage("validate"))?;
    let simulation = outputs.simulation.ok_or(ReportError::MissingStage("simulate"))?;

    let jaccard_index = ground_truth_minimal(outputs.ground_truth).map(|truth| {
        let ours: BTreeSet<String> = minimal.trajectories.iter().map(|t| t.trajectory_id.clone()).collect();
        jaccard_index(&ours, &truth)
    });

    let mut detail: Vec<EnvironmentRow> = envs
        .iter()
        .map(|e| {
            let phys = physics.iter().find(|p| p.environment == e.id);
            EnvironmentRow {
                environment: e.id.clone(),
                trajectory_id: e.trajectory_id.clone(),
                floor_plan: phys.is_some_and(|p| p.floor_plan.passed),
                entity: phys.is_some_and(|p| p.entity.passed),
                relation: phys.is_some_and(|p| p.relation.passed),
                valid: None,
                invalid_reason: None,
                verdicts: BTreeMap::new(),
            }
        })
        .collect();
    let row = |detail: &mut Vec<EnvironmentRow>, id: &str| detail.iter().position(|r| r.environment == id);
    if let Some(validity) = &simulation.validity {
        for id in &validity.valid {
            if let Some(i) = row(&mut detail, id) {
                detail[i].valid = Some(true);
            }
        }
        for inv in &validity.invalid {
            if let Some(i) = row(&mut detail, &inv.environment) {
                detail[i].valid = Some(false);
                detail[i].invalid_reason = Some(inv.reason.clone());
            }
        }
        for o in &validity.outcomes {
            if let Some(i) = row(&mut detail, &o.environment) {
                detail[i].verdicts.insert(o.policy.clone(), o.verdict.name().into());
            }
        }
    }
    if let Some(faults) = &simulation.faults {
        for o in faults.policies.iter().flat_map(|p| &p.outcomes) {
            if let Some(i) = row(&mut detail, &o.environment) {
                detail[i].verdicts.insert(o.policy.clone(), o.verdict.name().into());
            }
        }
    }

    Ok(RunReport {
        task_id: outputs.task_id.to_string(),
        trajectories_full: full.trajectories.len(),
        trajectories_minimal: minimal.trajectories.len(),
        environments: envs.len(),
        build_failures: outputs.build_failures.to_vec(),
        logic_coverage: logic_coverage_detail(envs, outputs.ground_truth, outputs.schema).ok(),
        logic_coverage_atomic: logic_coverage_atomic(envs, outputs.ground_truth, outputs.schema).ok(),
        physics_pass_rate: pass_rate(physics).ok(),
        scenario_validity: simulation.validity.as_ref().map(|v| v.rate),
        fault_detection: simulation.faults.as_ref().map(|f| f.per_category.clone()).unwrap_or_default(),
        fault_detection_average: simulation.faults.as_ref().and_then(|f| f.average),
        jaccard_index,
        detail,
    })
}

pub fn render_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.2}"))
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

pub fn render_markdown(report: &RunReport) -> String {
    let mut md = String::new();
    let phy = report.physics_pass_rate.as_ref();
    let _ = writeln!(md, "# Run report: {}\n", report.task_id);
    let _ = writeln!(
        md,
        "Trajectories: {} enumerated, {} selected. Environments built: {}.\n",
        report.trajectories_full, report.trajectories_minimal, report.environments
    );
    md.push_str("| Logic coverage (%) | Physics floor | Physics entity | Physics relation | Physics avg | Scene validity (%) |");
    for label in PolicyLabel::FAULTY {
        let _ = write!(md, " Detected {label} |");
    }
    md.push_str(" Detected avg | Jaccard |\n|");
    md.push_str(&"---|".repeat(8 + PolicyLabel::FAULTY.len()));
    md.push('\n');
    let _ = write!(
        md,
        "| {} | {} | {} | {} | {} | {} |",
        pct(report.logic_coverage.as_ref().map(|c| 100.0 * c.value)),
        pct(phy.map(|p| p.floor_plan)),
        pct(phy.map(|p| p.entity)),
        pct(phy.map(|p| p.relation)),
        pct(phy.map(|p| p.average)),
        pct(report.scenario_validity),
    );
    for label in PolicyLabel::FAULTY {
        let _ = write!(md, " {} |", pct(report.fault_detection.get(&label).map(|r| r.rate)));
    }
    let _ = writeln!(md, " {} | {} |", pct(report.fault_detection_average), report.jaccard_index.map_or("n/a".into(), |j| format!("{j:.3}")));
    if let Some(atomic) = &report.logic_coverage_atomic {
        let _ = writeln!(md, "\nCondition-level coverage: {}/{} ({:.2} %).", atomic.covered, atomic.total, 100.0 * atomic.value);
    }
    if let Some(c) = report.logic_coverage.as_ref().filter(|c| !c.uncovered.is_empty()) {
        let _ = writeln!(md, "\nUncovered paths:\n");
        for p in &c.uncovered {
            let _ = writeln!(md, "- `{p}`");
        }
    }

    let policies: BTreeSet<&String> = report.detail.iter().flat_map(|r| r.verdicts.keys()).collect();
    let _ = writeln!(md, "\n## Environments\n");
    md.push_str("| Environment | Trajectory | Floor | Entity | Relation | Valid |");
    for p in &policies {
        let _ = write!(md, " {p} |");
    }
    md.push_str("\n|");
    md.push_str(&"---|".repeat(6 + policies.len()));
    md.push('\n');
    for r in &report.detail {
        let valid = match (r.valid, &r.invalid_reason) {
            (Some(true), _) => "yes".to_string(),
            (Some(false), Some(reason)) => format!("no: {reason}"),
            _ => "n/a".into(),
        };
        let _ = write!(
            md,
            "| {} | `{}` | {} | {} | {} | {} |",
            r.environment,
            r.trajectory_id,
            mark(r.floor_plan),
            mark(r.entity),
            mark(r.relation),
            valid
        );
        for p in &policies {
            let _ = write!(md, " {} |", r.verdicts.get(*p).map_or("", String::as_str));
        }
        md.push('\n');
    }
    if !report.build_failures.is_empty() {
        let _ = writeln!(md, "\n## Build failures\n");
        for f in &report.build_failures {
            let _ = writeln!(md, "- {} (`{}`): {}", f.environment, f.trajectory_id, f.error);
        }
    }
    md
}
