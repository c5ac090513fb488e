#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use envgen::derivation::{derive, DEFAULT_MAX_ROUNDS};
use envgen::environment::EnvironmentSpec;
use envgen::layout::SolverConfig;
use envgen::plan::{extract_paths, BehaviorPlanTree, DecisionPath, LogicalTrajectory, QueryResponse};
use envgen::provider::{Provider, ProviderError, ProviderRequest, ReplayProvider, RequestKind};
use envgen::scene::{build_environment, AssetCatalog, SceneContext, DEFAULT_REFINE_ROUNDS};
use envgen::sim::{ActionModel, BehaviorTreePolicy, SimTask};
use envgen::task::TaskBundle;
use envgen::trajectory::{cartesian_trajectories, minimal_trajectory_selection};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/clean_living_room")
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn task_file() -> PathBuf {
    fixture_dir().join("task.json")
}

pub fn cassette_file() -> PathBuf {
    fixture_dir().join("cassette.json")
}

pub fn bundle() -> TaskBundle {
    TaskBundle::load(&task_file()).expect("fixture task")
}

pub fn catalog() -> AssetCatalog {
    AssetCatalog::load(&fixture_dir().join("catalog.json")).expect("fixture catalog")
}

pub fn replay() -> ReplayProvider {
    ReplayProvider::from_path(&cassette_file()).expect("fixture cassette")
}

/// Trees derived under replay, as the pipeline's derive stage sees them.
pub fn derived_trees() -> Vec<BehaviorPlanTree> {
    let result = derive(&mut replay(), &bundle().task, DEFAULT_MAX_ROUNDS).expect("derivation replays");
    result.trees
}

pub fn full_trajectories(trees: &[BehaviorPlanTree]) -> Vec<LogicalTrajectory> {
    let sets: Vec<_> = trees.iter().map(extract_paths).collect();
    cartesian_trajectories(&sets).expect("paths").collect()
}

/// Builds one environment per trajectory under replay, named env_NN.
pub fn build_all(trajectories: &[LogicalTrajectory]) -> Vec<EnvironmentSpec> {
    let bundle = bundle();
    let catalog = catalog();
    let solver = SolverConfig::default();
    let ctx = SceneContext {
        task: &bundle.task,
        schema: &bundle.schema,
        catalog: &catalog,
        solver: &solver,
        refine_rounds: DEFAULT_REFINE_ROUNDS,
    };
    let provider = replay();
    trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| {
            build_environment(&mut provider.fork(), &ctx, t, &format!("env_{i:02}"))
                .unwrap_or_else(|e| panic!("{}: {e}", t.trajectory_id))
        })
        .collect()
}

pub fn minimal_environments() -> (Vec<BehaviorPlanTree>, Vec<LogicalTrajectory>, Vec<EnvironmentSpec>) {
    let trees = derived_trees();
    let minimal = minimal_trajectory_selection(&full_trajectories(&trees));
    let envs = build_all(&minimal);
    (trees, minimal, envs)
}

pub struct SimFixture {
    pub bundle: TaskBundle,
    pub actions: ActionModel,
    pub policies: Vec<BehaviorTreePolicy>,
    pub ground_truth: Vec<DecisionPath>,
}

impl SimFixture {
    pub fn load() -> Self {
        let bundle = bundle();
        let actions = ActionModel::load(&bundle.action_model_path()).expect("action model");
        let policies = BehaviorTreePolicy::load_dir(&bundle.policies_dir()).expect("policies");
        let ground_truth = bundle.ground_truth_paths();
        Self { bundle, actions, policies, ground_truth }
    }

    pub fn task(&self) -> SimTask<'_> {
        SimTask { schema: &self.bundle.schema, actions: &self.actions, ground_truth: &self.ground_truth }
    }

    pub fn policy(&self, id: &str) -> &BehaviorTreePolicy {
        self.policies.iter().find(|p| p.id == id).unwrap_or_else(|| panic!("no policy {id}"))
    }
}

/// Path sets where subtask `s{i}` has `sizes[i]` paths answering `q{i}` with `p{j}`.
pub fn synthetic_sets(sizes: &[usize]) -> Vec<Vec<DecisionPath>> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            (0..n)
                .map(|j| DecisionPath::new(format!("s{i}"), vec![QueryResponse::new(format!("q{i}"), format!("p{j}"))], "act"))
                .collect()
        })
        .collect()
}

/// A provider that answers the three scene requests from fixed documents and
/// fails on anything else.
pub struct SceneScript {
    pub floor_plan: Value,
    pub objects: Value,
    pub relations: Value,
}

impl Provider for SceneScript {
    fn complete(&mut self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let answer = match request.kind {
            RequestKind::DesignFloorPlan => &self.floor_plan,
            RequestKind::SelectObjects => &self.objects,
            RequestKind::ProposeRelations | RequestKind::ReviseRelations => &self.relations,
            other => return Err(ProviderError::Config(format!("unexpected request {other:?}"))),
        };
        Ok(answer.to_string())
    }
}

pub fn rectangle_room(id: &str, width: f64, depth: f64) -> Value {
    json!({"id": id, "vertices": [[0.0, 0.0], [width, 0.0], [width, depth], [0.0, depth]], "height": 2.7})
}
