//! Stage orchestration over a run directory. Every stage reads its inputs
//! from and writes its outputs to fixed paths, so any stage can be rerun on
//! its own.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::derivation::{derive, DerivationRecord, DerivationResult, DEFAULT_MAX_ROUNDS};
use crate::environment::{deserialize, serialize, EnvironmentSpec, SCHEMA_VERSION};
use crate::layout::SolverConfig;
use crate::physics::{check_all, PhysicsReport};
use crate::plan::{extract_paths, LogicalTrajectory};
use crate::provider::{Cassette, HttpProvider, Provider, ProviderError, ProviderMode, Recorder, ReplayProvider};
use crate::report::{build_report, render_json, render_markdown, StageOutputs};
use crate::scene::{build_environment, AssetCatalog, BuildFailure, SceneContext, DEFAULT_REFINE_ROUNDS};
use crate::sim::{
    fault_detection_rate, scenario_validity, ActionModel, FaultReport, BehaviorTreePolicy, PolicyLabel, SimTask, SimulationResults,
    DEFAULT_BUDGET,
};
use crate::task::{read_json, TaskBundle};
use crate::trajectory::{cartesian_trajectories, minimal_trajectory_selection_with_stats, SelectionStats, TrajectorySetDoc};

pub const PLANS: &str = "plans/derivation.json";
pub const TRAJECTORIES_FULL: &str = "trajectories/full.json";
pub const TRAJECTORIES_MINIMAL: &str = "trajectories/minimal.json";
pub const SELECTION_STATS: &str = "trajectories/selection.json";
pub const ENVIRONMENTS_DIR: &str = "environments";
pub const ENVIRONMENT_INDEX: &str = "environments/index.json";
pub const PHYSICS: &str = "reports/physics.json";
pub const SIMULATION: &str = "reports/simulation.json";
pub const REPORT_JSON: &str = "reports/report.json";
pub const REPORT_MD: &str = "reports/report.md";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Derive,
    Collect,
    Build,
    Validate,
    Simulate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Self::Derive, Self::Collect, Self::Build, Self::Validate, Self::Simulate, Self::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Derive => "derive",
            Self::Collect => "collect",
            Self::Build => "build",
            Self::Validate => "validate",
            Self::Simulate => "simulate",
            Self::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Parses `all` or a comma-separated stage list; the result is in pipeline
/// order without duplicates.
pub fn parse_stages(text: &str) -> Result<Vec<Stage>, String> {
    if text.trim() == "all" {
        return Ok(Stage::ALL.to_vec());
    }
    let mut stages = text.split(',').map(|s| s.trim().parse()).collect::<Result<Vec<Stage>, _>>()?;
    stages.sort();
    stages.dedup();
    if stages.is_empty() {
        return Err("no stages selected".into());
    }
    Ok(stages)
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{stage}: missing input {}", path.display())]
    MissingInput { stage: Stage, path: PathBuf },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    /// Exit status for the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}

fn stage_err(stage: Stage) -> impl Fn(&dyn fmt::Display) -> PipelineError {
    move |e| PipelineError::Stage { stage, message: e.to_string() }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: PathBuf,
    pub provider: ProviderMode,
    pub catalog: PathBuf,
    pub solver: SolverConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub stages: Vec<Stage>,
    /// Worker threads for builds and simulations.
    pub jobs: usize,
    pub budget: u64,
    pub derive_rounds: usize,
    pub refine_rounds: usize,
}

impl RunConfig {
    pub fn new(task: PathBuf, provider: ProviderMode, catalog: PathBuf, out: PathBuf) -> Self {
        Self {
            task,
            provider,
            catalog,
            solver: SolverConfig::default(),
            out,
            seed: 0,
            stages: Stage::ALL.to_vec(),
            jobs: std::thread::available_parallelism().map_or(1, usize::from),
            budget: DEFAULT_BUDGET,
            derive_rounds: DEFAULT_MAX_ROUNDS,
            refine_rounds: DEFAULT_REFINE_ROUNDS,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.jobs == 0 {
            return Err(PipelineError::Config("jobs must be at least 1".into()));
        }
        if self.budget == 0 {
            return Err(PipelineError::Config("tick budget must be at least 1".into()));
        }
        if !self.task.is_file() {
            return Err(PipelineError::Config(format!("task file {} does not exist", self.task.display())));
        }
        if let ProviderMode::Replay { cassette } = &self.provider {
            if !cassette.is_file() {
                return Err(PipelineError::Config(format!("cassette {} does not exist", cassette.display())));
            }
        }
        self.solver_config().validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Solver settings with the run seed applied.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { seed: self.seed, ..self.solver.clone() }
    }
}

/// Hands out independent provider sessions. In live mode with recording, the
/// exchanges of each session are appended to the cassette in the order the
/// sessions are committed.
enum Providers {
    Replay(ReplayProvider),
    Live { endpoint: String, record: Option<(PathBuf, Mutex<Cassette>)> },
}

struct Session {
    inner: SessionInner,
}

enum SessionInner {
    Replay(ReplayProvider),
    Live(Recorder<HttpProvider>),
}

impl Provider for Session {
    fn complete(&mut self, request: &crate::provider::ProviderRequest) -> Result<String, ProviderError> {
        match &mut self.inner {
            SessionInner::Replay(p) => p.complete(request),
            SessionInner::Live(p) => p.complete(request),
        }
    }
}

impl Providers {
    fn open(mode: &ProviderMode) -> Result<Self, PipelineError> {
        match mode {
            ProviderMode::Replay { cassette } => ReplayProvider::from_path(cassette)
                .map(Self::Replay)
                .map_err(|e| PipelineError::Config(e.to_string())),
            ProviderMode::Live { endpoint, record } => {
                let record = match record {
                    Some(path) if path.is_file() => {
                        Some((path.clone(), Mutex::new(Cassette::load(path).map_err(|e| PipelineError::Config(e.to_string()))?)))
                    }
                    Some(path) => Some((path.clone(), Mutex::new(Cassette::default()))),
                    None => None,
                };
                Ok(Self::Live { endpoint: endpoint.clone(), record })
            }
        }
    }

    fn session(&self) -> Session {
        let inner = match self {
            Self::Replay(p) => SessionInner::Replay(p.fork()),
            Self::Live { endpoint, .. } => SessionInner::Live(Recorder::new(HttpProvider::new(endpoint.clone()))),
        };
        Session { inner }
    }

    fn commit(&self, session: Session) {
        if let (Self::Live { record: Some((_, cassette)), .. }, SessionInner::Live(recorder)) = (self, session.inner) {
            let (_, recorded) = recorder.into_parts();
            cassette.lock().expect("cassette lock").merge(recorded);
        }
    }

    fn save(&self) -> Result<(), ProviderError> {
        match self {
            Self::Live { record: Some((path, cassette)), .. } => cassette.lock().expect("cassette lock").save(path),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentIndex {
    pub environments: Vec<String>,
    pub failures: Vec<BuildFailure>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub environment_schema: u32,
    pub task_id: String,
    pub seed: u64,
    pub solver: Option<SolverConfig>,
    pub tick_budget: u64,
    /// SHA-256 of each input file.
    pub inputs: BTreeMap<String, String>,
    /// Outputs per completed stage, relative to the run directory.
    pub stages: BTreeMap<Stage, Vec<String>>,
    /// Everything that may differ between identical reruns.
    pub volatile: Volatile,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Volatile {
    pub updated_at: String,
    pub stage_ms: BTreeMap<Stage, u64>,
    pub simulation_ms: BTreeMap<String, u64>,
}

fn sha256_file(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|bytes| hex::encode(Sha256::digest(bytes)))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

pub struct Pipeline {
    pub config: RunConfig,
    bundle: TaskBundle,
    manifest: Manifest,
    providers: Option<Providers>,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let bundle = TaskBundle::load(&config.task).map_err(|e| PipelineError::Config(e.to_string()))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let manifest: Manifest = fs::read_to_string(config.out.join(MANIFEST))
            .ok()
            .and_then(|text| serde_json::from_str(&text).ok())
            .unwrap_or_default();
        Ok(Self { config, bundle, manifest, providers: None, pool })
    }

    pub fn bundle(&self) -> &TaskBundle {
        &self.bundle
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.config.out.join(rel)
    }

    fn write(&self, stage: Stage, rel: &str, text: &str) -> Result<(), PipelineError> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| stage_err(stage)(&e))?;
        }
        fs::write(&path, text).map_err(|e| PipelineError::Stage { stage, message: format!("{}: {e}", path.display()) })
    }

    fn read<T: serde::de::DeserializeOwned>(&self, stage: Stage, rel: &str) -> Result<T, PipelineError> {
        let path = self.path(rel);
        if !path.is_file() {
            return Err(PipelineError::MissingInput { stage, path });
        }
        read_json(&path).map_err(|e| stage_err(stage)(&e))
    }

    fn providers(&mut self) -> Result<&Providers, PipelineError> {
        if self.providers.is_none() {
            self.providers = Some(Providers::open(&self.config.provider)?);
        }
        Ok(self.providers.as_ref().expect("just opened"))
    }

    /// Runs the configured stages in order, stopping at the first error. The
    /// manifest is written after every stage.
    pub fn run(&mut self) -> Result<(), PipelineError> {
        fs::create_dir_all(&self.config.out).map_err(|e| PipelineError::Config(format!("{}: {e}", self.config.out.display())))?;
        for stage in self.config.stages.clone() {
            log::info!("stage {stage}");
            let started = Instant::now();
            let outputs = match stage {
                Stage::Derive => self.derive(),
                Stage::Collect => self.collect(),
                Stage::Build => self.build(),
                Stage::Validate => self.validate(),
                Stage::Simulate => self.simulate(),
                Stage::Report => self.report(),
            };
            let elapsed = started.elapsed().as_millis() as u64;
            let outcome = outputs.map(|outputs| {
                self.manifest.stages.insert(stage, outputs);
            });
            self.manifest.volatile.stage_ms.insert(stage, elapsed);
            self.write_manifest()?;
            outcome?;
        }
        Ok(())
    }

    fn write_manifest(&mut self) -> Result<(), PipelineError> {
        let m = &mut self.manifest;
        m.tool = env!("CARGO_PKG_NAME").into();
        m.version = env!("CARGO_PKG_VERSION").into();
        m.environment_schema = SCHEMA_VERSION;
        m.task_id = self.bundle.task.id.clone();
        m.seed = self.config.seed;
        m.solver = Some(self.config.solver_config());
        m.tick_budget = self.config.budget;
        let dir = &self.bundle.dir;
        let mut inputs = BTreeMap::new();
        let mut files = vec![
            ("task".to_string(), self.config.task.clone()),
            ("schema".to_string(), dir.join("schema.json")),
            ("plan".to_string(), dir.join("plan.json")),
            ("action_model".to_string(), self.bundle.action_model_path()),
            ("catalog".to_string(), self.config.catalog.clone()),
        ];
        if let ProviderMode::Replay { cassette } = &self.config.provider {
            files.push(("cassette".into(), cassette.clone()));
        }
        if let Ok(policies) = BehaviorTreePolicy::load_dir(&self.bundle.policies_dir()) {
            files.extend(policies.iter().map(|p| (format!("policy:{}", p.id), self.bundle.policies_dir().join(format!("{}.json", p.id)))));
        }
        for (name, path) in files {
            if let Some(hash) = sha256_file(&path) {
                inputs.insert(name, hash);
            }
        }
        m.inputs = inputs;
        m.volatile.updated_at = chrono::Utc::now().to_rfc3339();
        let text = to_json(&self.manifest);
        fs::write(self.path(MANIFEST), text).map_err(|e| PipelineError::Config(format!("manifest: {e}")))
    }

    pub fn derive(&mut self) -> Result<Vec<String>, PipelineError> {
        let rounds = self.config.derive_rounds;
        let task = self.bundle.task.clone();
        let providers = self.providers()?;
        let mut session = providers.session();
        let result = derive(&mut session, &task, rounds).map_err(|e| stage_err(Stage::Derive)(&e))?;
        providers.commit(session);
        providers.save().map_err(|e| stage_err(Stage::Derive)(&e))?;
        self.write(Stage::Derive, PLANS, &to_json(&result.to_record()))?;
        Ok(vec![PLANS.into()])
    }

    fn load_plans(&self, stage: Stage) -> Result<DerivationResult, PipelineError> {
        let record: DerivationRecord = self.read(stage, PLANS)?;
        DerivationResult::from_record(record).map_err(|e| stage_err(stage)(&e))
    }

    pub fn collect(&mut self) -> Result<Vec<String>, PipelineError> {
        let plans = self.load_plans(Stage::Collect)?;
        let sets: Vec<_> = plans.trees.iter().map(extract_paths).collect();
        let full: Vec<LogicalTrajectory> = cartesian_trajectories(&sets).map_err(|e| stage_err(Stage::Collect)(&e))?.collect();
        let selection = minimal_trajectory_selection_with_stats(&full);
        let subtasks = plans.subtask_ids();
        self.write(Stage::Collect, TRAJECTORIES_FULL, &to_json(&TrajectorySetDoc::new(subtasks.clone(), &full)))?;
        self.write(Stage::Collect, TRAJECTORIES_MINIMAL, &to_json(&TrajectorySetDoc::new(subtasks, &selection.trajectories)))?;
        self.write(Stage::Collect, SELECTION_STATS, &to_json(&selection.stats))?;
        Ok(vec![TRAJECTORIES_FULL.into(), TRAJECTORIES_MINIMAL.into(), SELECTION_STATS.into()])
    }

    fn load_trajectories(&self, stage: Stage, rel: &str) -> Result<(TrajectorySetDoc, Vec<LogicalTrajectory>), PipelineError> {
        let doc: TrajectorySetDoc = self.read(stage, rel)?;
        let list = doc.trajectories().map_err(|e| PipelineError::Stage { stage, message: e })?;
        Ok((doc, list))
    }

    pub fn build(&mut self) -> Result<Vec<String>, PipelineError> {
        let (_, trajectories) = self.load_trajectories(Stage::Build, TRAJECTORIES_MINIMAL)?;
        let catalog = AssetCatalog::load(&self.config.catalog).map_err(|e| PipelineError::Config(e.to_string()))?;
        let solver = self.config.solver_config();
        let refine_rounds = self.config.refine_rounds;
        self.providers()?;
        let providers = self.providers.as_ref().expect("opened");
        let ctx = SceneContext { task: &self.bundle.task, schema: &self.bundle.schema, catalog: &catalog, solver: &solver, refine_rounds };
        let built: Vec<(String, Result<EnvironmentSpec, String>, Session)> = self.pool.install(|| {
            trajectories
                .par_iter()
                .enumerate()
                .map(|(i, t)| {
                    let id = format!("env_{i:02}");
                    let mut session = providers.session();
                    let result = build_environment(&mut session, &ctx, t, &id).map_err(|e| e.to_string());
                    (id, result, session)
                })
                .collect()
        });
        let dir = self.path(ENVIRONMENTS_DIR);
        if dir.is_dir() {
            for entry in fs::read_dir(&dir).map_err(|e| stage_err(Stage::Build)(&e))?.flatten() {
                if entry.path().extension().is_some_and(|x| x == "json") {
                    let _ = fs::remove_file(entry.path());
                }
            }
        }
        let mut index = EnvironmentIndex::default();
        let mut outputs = Vec::new();
        for ((id, result, session), trajectory) in built.into_iter().zip(&trajectories) {
            providers.commit(session);
            match result {
                Ok(env) => {
                    let rel = format!("{ENVIRONMENTS_DIR}/{id}.json");
                    let text = serialize(&env).map_err(|e| stage_err(Stage::Build)(&e))?;
                    self.write(Stage::Build, &rel, &text)?;
                    index.environments.push(id);
                    outputs.push(rel);
                }
                Err(error) => {
                    log::warn!("{id} ({}): {error}", trajectory.trajectory_id);
                    index.failures.push(BuildFailure { environment: id, trajectory_id: trajectory.trajectory_id.clone(), error });
                }
            }
        }
        providers.save().map_err(|e| stage_err(Stage::Build)(&e))?;
        self.write(Stage::Build, ENVIRONMENT_INDEX, &to_json(&index))?;
        outputs.push(ENVIRONMENT_INDEX.into());
        if let Some(first) = index.failures.first() {
            return Err(PipelineError::Stage {
                stage: Stage::Build,
                message: format!("{} of {} environment(s) failed; first: {}: {}", index.failures.len(), trajectories.len(), first.environment, first.error),
            });
        }
        Ok(outputs)
    }

    /// Environments listed in the index, in index order.
    pub fn load_environments(&self, stage: Stage) -> Result<(Vec<EnvironmentSpec>, EnvironmentIndex), PipelineError> {
        let index: EnvironmentIndex = self.read(stage, ENVIRONMENT_INDEX)?;
        let envs = index
            .environments
            .iter()
            .map(|id| {
                let path = self.path(&format!("{ENVIRONMENTS_DIR}/{id}.json"));
                let text = fs::read_to_string(&path).map_err(|_| PipelineError::MissingInput { stage, path: path.clone() })?;
                deserialize(&text).map_err(|e| PipelineError::Stage { stage, message: format!("{}: {e}", path.display()) })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((envs, index))
    }

    pub fn validate(&mut self) -> Result<Vec<String>, PipelineError> {
        let (envs, _) = self.load_environments(Stage::Validate)?;
        let thresholds = self.config.solver.thresholds.clone();
        let reports: Vec<PhysicsReport> = self.pool.install(|| envs.par_iter().map(|e| check_all(e, &thresholds)).collect());
        self.write(Stage::Validate, PHYSICS, &to_json(&reports))?;
        Ok(vec![PHYSICS.into()])
    }

    pub fn simulate(&mut self) -> Result<Vec<String>, PipelineError> {
        let (envs, _) = self.load_environments(Stage::Simulate)?;
        let err = stage_err(Stage::Simulate);
        let model = ActionModel::load(&self.bundle.action_model_path()).map_err(|e| err(&e))?;
        let policies = BehaviorTreePolicy::load_dir(&self.bundle.policies_dir()).map_err(|e| err(&e))?;
        let mut correct = policies.iter().filter(|p| p.label == PolicyLabel::Correct);
        let (Some(correct), None) = (correct.next(), correct.next()) else {
            return Err(PipelineError::Config("the task needs exactly one policy labeled correct".into()));
        };
        let faulty: Vec<BehaviorTreePolicy> = policies.iter().filter(|p| p.label != PolicyLabel::Correct).cloned().collect();
        let ground_truth = self.bundle.ground_truth_paths();
        let task = SimTask { schema: &self.bundle.schema, actions: &model, ground_truth: &ground_truth };
        let budget = self.config.budget;

        let mut timings = BTreeMap::new();
        let started = Instant::now();
        let validity = if envs.is_empty() {
            None
        } else {
            Some(self.pool.install(|| scenario_validity(correct, &envs, &task, budget)).map_err(|e| err(&e))?)
        };
        timings.insert(correct.id.clone(), started.elapsed().as_millis() as u64);

        let valid: Vec<EnvironmentSpec> = match &validity {
            Some(v) => envs.iter().filter(|e| v.valid.contains(&e.id)).cloned().collect(),
            None => Vec::new(),
        };
        let faults = if valid.is_empty() {
            None
        } else {
            let mut detections = Vec::new();
            for policy in &faulty {
                let started = Instant::now();
                let one = self
                    .pool
                    .install(|| fault_detection_rate(std::slice::from_ref(policy), &valid, &task, budget))
                    .map_err(|e| err(&e))?;
                timings.insert(policy.id.clone(), started.elapsed().as_millis() as u64);
                detections.extend(one.policies);
            }
            Some(FaultReport::from_detections(detections))
        };
        self.manifest.volatile.simulation_ms = timings;
        let results = SimulationResults { correct_policy: correct.id.clone(), validity, faults };
        self.write(Stage::Simulate, SIMULATION, &to_json(&results))?;
        Ok(vec![SIMULATION.into()])
    }

    pub fn report(&mut self) -> Result<Vec<String>, PipelineError> {
        let stage = Stage::Report;
        let optional = |rel: &str| -> Result<Option<Value>, PipelineError> {
            match self.read::<Value>(stage, rel) {
                Ok(v) => Ok(Some(v)),
                Err(PipelineError::MissingInput { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        };
        let full: Option<TrajectorySetDoc> = decode(stage, optional(TRAJECTORIES_FULL)?)?;
        let minimal: Option<TrajectorySetDoc> = decode(stage, optional(TRAJECTORIES_MINIMAL)?)?;
        let physics: Option<Vec<PhysicsReport>> = decode(stage, optional(PHYSICS)?)?;
        let simulation: Option<SimulationResults> = decode(stage, optional(SIMULATION)?)?;
        let envs = match self.load_environments(stage) {
            Ok(loaded) => Some(loaded),
            Err(PipelineError::MissingInput { .. }) => None,
            Err(e) => return Err(e),
        };
        let outputs = StageOutputs {
            task_id: &self.bundle.task.id,
            schema: &self.bundle.schema,
            ground_truth: &self.bundle.ground_truth,
            full: full.as_ref(),
            minimal: minimal.as_ref(),
            environments: envs.as_ref().map(|(e, _)| e.as_slice()),
            build_failures: envs.as_ref().map_or(&[], |(_, i)| i.failures.as_slice()),
            physics: physics.as_deref(),
            simulation: simulation.as_ref(),
        };
        let report = build_report(&outputs).map_err(|e| stage_err(stage)(&e))?;
        self.write(stage, REPORT_JSON, &render_json(&report))?;
        self.write(stage, REPORT_MD, &render_markdown(&report))?;
        Ok(vec![REPORT_JSON.into(), REPORT_MD.into()])
    }
}

fn decode<T: serde::de::DeserializeOwned>(stage: Stage, value: Option<Value>) -> Result<Option<T>, PipelineError> {
    value.map(serde_json::from_value).transpose().map_err(|e| stage_err(stage)(&e))
}

/// Runs the configured stages; the convenience entry point behind the CLI.
pub fn run_stages(config: RunConfig) -> Result<(), PipelineError> {
    Pipeline::new(config)?.run()
}

pub fn cmd_run_all(mut config: RunConfig) -> Result<(), PipelineError> {
    config.stages = Stage::ALL.to_vec();
    run_stages(config)
}

/// Selection stats persisted by the collect stage.
pub fn load_selection_stats(run_dir: &Path) -> Result<SelectionStats, PipelineError> {
    let path = run_dir.join(SELECTION_STATS);
    if !path.is_file() {
        return Err(PipelineError::MissingInput { stage: Stage::Collect, path });
    }
    read_json(&path).map_err(|e| stage_err(Stage::Collect)(&e))
}

/// The manifest without its volatile section, for comparing reruns.
pub fn stable_manifest(run_dir: &Path) -> Option<Value> {
    let mut value: Value = serde_json::from_str(&fs::read_to_string(run_dir.join(MANIFEST)).ok()?).ok()?;
    value.as_object_mut()?.remove("volatile");
    Some(json!(value))
}
