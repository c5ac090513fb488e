//! Builds one environment per logical trajectory: floor plan, object
//! selection with asset retrieval, relation proposal and repair, then layout.

pub mod catalog;
pub mod compat;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::environment::{
    rebuild_metadata, EnvError, EnvironmentSpec, FloorPlan, MassCategory, ObjectCategory, ObjectSpec, Placement, Priority,
    RelationGroup, RelationKind, SpatialRelation,
};
use crate::layout::{self, relation_constraint_id, LayoutError, RelaxError, SolveError, SolverConfig};
use crate::plan::{LogicalTrajectory, QueryResponse, TaskSpec};
use crate::prompts;
use crate::provider::{canonical_json, Provider, ProviderError, ProviderRequest, RequestKind};
use crate::task::TaskSchema;
pub use catalog::{embed, retrieve_asset, AssetCatalog, CatalogError};
pub use compat::{check_compatibility, CompatRule, Conflict};

pub const DEFAULT_REFINE_ROUNDS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{stage}: unusable response: {message}")]
    Format { stage: &'static str, message: String },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Encoding(#[from] LayoutError),
    #[error(transparent)]
    Schema(#[from] EnvError),
    #[error("unsatisfiable scene after relaxing {relaxed:?}: {cause}")]
    UnsatisfiableScene { relaxed: Vec<String>, cause: SolveError },
    #[error("environment contradicts its trajectory at {}", unmet.iter().map(|s| format!("`{} {}`", s.query, s.response)).collect::<Vec<_>>().join(", "))]
    TrajectoryMismatch { unmet: Vec<QueryResponse> },
}

/// A trajectory whose environment could not be built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildFailure {
    pub environment: String,
    pub trajectory_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectProposal {
    pub id: String,
    pub description: String,
    pub room: String,
    pub category: ObjectCategory,
    #[serde(default)]
    pub mass_category: MassCategory,
    /// Overrides the retrieved asset's bounding box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<[f64; 3]>,
    #[serde(default)]
    pub attributes: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationProposal {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub kind: RelationKind,
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Deserialize)]
struct ObjectsReply {
    objects: Vec<ObjectProposal>,
}

#[derive(Deserialize)]
struct RelationsReply {
    relations: Vec<RelationProposal>,
}

fn parse<T: serde::de::DeserializeOwned>(stage: &'static str, text: &str) -> Result<T, BuildError> {
    serde_json::from_str(text).map_err(|e| BuildError::Format { stage, message: e.to_string() })
}

fn trajectory_value(trajectory: &LogicalTrajectory) -> Value {
    let steps: Vec<Value> = trajectory.steps().map(|s| json!({"query": s.query, "response": s.response})).collect();
    json!({"id": trajectory.trajectory_id, "steps": steps})
}

fn trajectory_text(trajectory: &LogicalTrajectory) -> String {
    trajectory.steps().map(|s| format!("\n- {} {}", s.query, s.response)).collect()
}

fn task_value(task: &TaskSpec) -> Value {
    json!({"id": task.id, "description": task.description, "environment_type": task.environment_type})
}

/// Priority follows the subject's category; unknown subjects count as task.
pub fn relations_from_proposals(proposals: Vec<RelationProposal>, objects: &[ObjectSpec]) -> Vec<SpatialRelation> {
    proposals
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let priority = objects
                .iter()
                .find(|o| o.id == p.subject)
                .map(|o| Priority::from(o.category))
                .unwrap_or(Priority::Task);
            SpatialRelation {
                id: p.id.unwrap_or_else(|| format!("r{i}")),
                kind: p.kind,
                subject: p.subject,
                reference: p.reference,
                priority,
            }
        })
        .collect()
}

fn relation_values(relations: &[SpatialRelation]) -> Value {
    serde_json::to_value(relations).expect("relations serialize")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub relations: Vec<SpatialRelation>,
    /// Revision requests sent.
    pub rounds: usize,
    /// Relations removed after the rounds ran out.
    pub dropped: Vec<String>,
}

/// Asks for revisions until the relation set is conflict-free or
/// `max_rounds` revisions were spent; leftover conflicts are then resolved
/// by dropping relations, enrichment ones before task ones, later-declared
/// before earlier.
pub fn refine_relations<P: Provider + ?Sized>(
    provider: &mut P,
    relations: Vec<SpatialRelation>,
    objects: &[ObjectSpec],
    floor_plan: &FloorPlan,
    max_rounds: usize,
) -> Result<RefineOutcome, BuildError> {
    let mut current = relations;
    let mut rounds = 0;
    loop {
        let conflicts = check_compatibility(&current, objects, floor_plan);
        if conflicts.is_empty() {
            return Ok(RefineOutcome { relations: current, rounds, dropped: Vec::new() });
        }
        if rounds == max_rounds {
            break;
        }
        let conflicts_text: String = conflicts.iter().map(|c| format!("\n- {:?}: {}", c.rule, c.message)).collect();
        let previous = relation_values(&current);
        let prompt =
            prompts::render(prompts::REVISE_RELATIONS, &[("conflicts", &conflicts_text), ("previous", &canonical_json(&previous))]);
        let request = ProviderRequest::new(
            RequestKind::ReviseRelations,
            json!({"prompt": prompt, "previous": previous, "conflicts": conflicts}),
        );
        let reply: RelationsReply = parse("revise_relations", &provider.complete(&request)?)?;
        current = relations_from_proposals(reply.relations, objects);
        rounds += 1;
    }
    let mut dropped = Vec::new();
    while let Some(conflict) = check_compatibility(&current, objects, floor_plan).into_iter().next() {
        let victim = conflict
            .relations
            .iter()
            .copied()
            .filter(|&i| current[i].priority == Priority::Enrichment)
            .max()
            .unwrap_or_else(|| *conflict.relations.iter().max().expect("conflicts name relations"));
        log::info!("dropping relation {} ({:?})", current[victim].id, conflict.rule);
        dropped.push(current.remove(victim).id);
    }
    Ok(RefineOutcome { relations: current, rounds, dropped })
}

/// Constraint ids that may be relaxed, in drop order: enrichment distance
/// relations, then enrichment relative relations, then enrichment unary
/// relations, each in declaration order.
pub fn relax_policy(relations: &[SpatialRelation]) -> Vec<String> {
    [RelationGroup::Distance, RelationGroup::Relative, RelationGroup::Unary]
        .into_iter()
        .flat_map(|group| {
            relations
                .iter()
                .filter(move |r| r.priority == Priority::Enrichment && r.kind.group() == group)
                .map(|r| relation_constraint_id(&r.id))
        })
        .collect()
}

/// Solves the layout of a floor plan with its objects and relations and
/// writes placements, opening positions and relaxed ids into `env`.
pub fn arrange(env: &mut EnvironmentSpec, config: &SolverConfig) -> Result<(), BuildError> {
    let problem = layout::encode(&env.floor_plan, &env.objects, &env.relations, config)?;
    let policy = relax_policy(&env.relations);
    let solution = layout::solve_with_relaxation(&problem, config, &policy).map_err(|e| match e {
        RelaxError::CoreUnsat { relaxed, cause } => BuildError::UnsatisfiableScene { relaxed, cause },
        other => BuildError::Format { stage: "relaxation", message: other.to_string() },
    })?;
    env.placements = env
        .objects
        .iter()
        .map(|o| Placement {
            object: o.id.clone(),
            position: solution.position(&o.id).expect("solved object"),
            direction: solution.direction(&o.id).expect("solved object"),
        })
        .collect();
    for door in &mut env.floor_plan.doorways {
        door.position = solution.position(&door.id);
    }
    for window in &mut env.floor_plan.windows {
        window.position = solution.position(&window.id);
    }
    env.relaxed = solution.relaxed.iter().filter_map(|c| c.strip_prefix("rel:").map(str::to_string)).collect();
    Ok(())
}

pub struct SceneContext<'a> {
    pub task: &'a TaskSpec,
    pub schema: &'a TaskSchema,
    pub catalog: &'a AssetCatalog,
    pub solver: &'a SolverConfig,
    pub refine_rounds: usize,
}

pub fn build_environment<P: Provider + ?Sized>(
    provider: &mut P,
    ctx: &SceneContext<'_>,
    trajectory: &LogicalTrajectory,
    env_id: &str,
) -> Result<EnvironmentSpec, BuildError> {
    let task = task_value(ctx.task);
    let situation = trajectory_text(trajectory);
    let traj = trajectory_value(trajectory);
    let base_vars = [
        ("description", ctx.task.description.as_str()),
        ("environment_type", ctx.task.environment_type.as_str()),
        ("trajectory", situation.as_str()),
    ];

    let prompt = prompts::render(prompts::DESIGN_FLOOR_PLAN, &base_vars);
    let request = ProviderRequest::new(RequestKind::DesignFloorPlan, json!({"prompt": prompt, "task": task, "trajectory": traj}));
    let mut floor_plan: FloorPlan = parse("design_floor_plan", &provider.complete(&request)?)?;
    for door in &mut floor_plan.doorways {
        door.position = None;
    }
    for window in &mut floor_plan.windows {
        window.position = None;
    }
    let plan_value = serde_json::to_value(&floor_plan).expect("floor plan serializes");
    let plan_text = canonical_json(&plan_value);

    let mut vars = base_vars.to_vec();
    vars.push(("floor_plan", &plan_text));
    let prompt = prompts::render(prompts::SELECT_OBJECTS, &vars);
    let request = ProviderRequest::new(
        RequestKind::SelectObjects,
        json!({"prompt": prompt, "task": task, "trajectory": traj, "floor_plan": plan_value}),
    );
    let reply: ObjectsReply = parse("select_objects", &provider.complete(&request)?)?;
    let mut objects = Vec::with_capacity(reply.objects.len());
    for p in reply.objects {
        let asset = retrieve_asset(ctx.catalog, &p.description, embed)?;
        objects.push(ObjectSpec {
            size: p.size.unwrap_or(asset.bbox),
            asset_id: Some(asset.asset_id.clone()),
            id: p.id,
            description: p.description,
            room: p.room,
            category: p.category,
            mass_category: p.mass_category,
            attributes: p.attributes.into_iter().collect(),
        });
    }

    let objects_value = serde_json::to_value(&objects).expect("objects serialize");
    let prompt = prompts::render(
        prompts::PROPOSE_RELATIONS,
        &[("objects", &canonical_json(&objects_value)), ("floor_plan", &plan_text)],
    );
    let request =
        ProviderRequest::new(RequestKind::ProposeRelations, json!({"prompt": prompt, "objects": objects_value, "floor_plan": plan_value}));
    let reply: RelationsReply = parse("propose_relations", &provider.complete(&request)?)?;
    let proposed = relations_from_proposals(reply.relations, &objects);
    let refined = refine_relations(provider, proposed, &objects, &floor_plan, ctx.refine_rounds)?;

    let mut env = EnvironmentSpec::new(env_id, &ctx.task.id, floor_plan);
    env.trajectory_id = trajectory.trajectory_id.clone();
    env.trajectory_paths = trajectory.paths.clone();
    env.objects = objects;
    env.relations = refined.relations;
    env.validate()?;
    arrange(&mut env, ctx.solver)?;
    env.metadata = rebuild_metadata(&env)?;
    let unmet = ctx.schema.unmet_steps(trajectory.steps(), &env.metadata);
    if !unmet.is_empty() {
        return Err(BuildError::TrajectoryMismatch { unmet });
    }
    Ok(env)
}
