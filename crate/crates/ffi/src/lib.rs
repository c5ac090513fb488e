//! C ABI over the envgen library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_parse`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an `EnvgenStatus`; on failure the message is available from
//! `envgen_last_error` on the same thread. Strings handed out by the library
//! are owned by the caller and must be released with `envgen_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use envgen::environment::{deserialize, rebuild_metadata, EnvironmentSpec};
use envgen::layout::SolverConfig;
use envgen::physics::{check_all, PhysicsReport};
use envgen::pipeline::{cmd_run_all, PipelineError, RunConfig};
use envgen::plan::{extract_paths, parse_plan_trees, BehaviorPlanTree, LogicalTrajectory};
use envgen::provider::ProviderMode;
use envgen::scene::{arrange, BuildError};
use envgen::trajectory::{cartesian_trajectories, minimal_trajectory_selection, TrajectorySetDoc};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvgenStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Unsatisfiable = 4,
    StageFailed = 5,
    ConfigError = 6,
    Panic = 7,
}

/// Bit set in the physics mask when the floor plan passes.
pub const ENVGEN_PHYSICS_FLOOR_PLAN: u32 = 1;
/// Bit set in the physics mask when every object is supported and free of
/// collisions.
pub const ENVGEN_PHYSICS_ENTITY: u32 = 2;
/// Bit set in the physics mask when every kept relation holds.
pub const ENVGEN_PHYSICS_RELATION: u32 = 4;

/// Behavior plans, one tree per subtask.
pub struct EnvgenPlan {
    trees: Vec<BehaviorPlanTree>,
}

/// An ordered list of logical trajectories.
pub struct EnvgenTrajectories {
    subtasks: Vec<String>,
    items: Vec<LogicalTrajectory>,
}

/// A simulated environment.
pub struct EnvgenEnvironment {
    spec: EnvironmentSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: EnvgenStatus, message: impl Into<String>) -> EnvgenStatus {
    set_error(message);
    status
}

/// Runs `f`, turning panics into `EnvgenStatus::Panic` and clearing the last
/// error on success.
fn guard(f: impl FnOnce() -> Result<(), (EnvgenStatus, String)>) -> EnvgenStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EnvgenStatus::Ok
        }
        Ok(Err((status, message))) => fail(status, message),
        Err(_) => fail(EnvgenStatus::Panic, "internal panic"),
    }
}

type Outcome = Result<(), (EnvgenStatus, String)>;

fn invalid(e: impl std::fmt::Display) -> (EnvgenStatus, String) {
    (EnvgenStatus::InvalidInput, e.to_string())
}

unsafe fn text<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, (EnvgenStatus, String)> {
    if ptr.is_null() {
        return Err((EnvgenStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| (EnvgenStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn optional_text<'a>(ptr: *const c_char, name: &str) -> Result<Option<&'a str>, (EnvgenStatus, String)> {
    if ptr.is_null() {
        Ok(None)
    } else {
        text(ptr, name).map(Some)
    }
}

unsafe fn handle<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, (EnvgenStatus, String)> {
    ptr.as_ref().ok_or_else(|| (EnvgenStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err((EnvgenStatus::NullPointer, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, value: String) -> Outcome {
    if out.is_null() {
        return Err((EnvgenStatus::NullPointer, "output pointer is null".into()));
    }
    let c = CString::new(value).map_err(|_| invalid("string contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put_value<T>(out: *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err((EnvgenStatus::NullPointer, "output pointer is null".into()));
    }
    *out = value;
    Ok(())
}

/// Library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn envgen_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The message of the last failed call on this thread, or NULL when the last
/// call succeeded. The caller frees the copy with `envgen_string_free`.
#[no_mangle]
pub extern "C" fn envgen_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |m| m.clone().into_raw()))
}

/// # Safety
/// `s` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn envgen_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a plan document (a JSON list of decision trees) whose trees belong
/// to the subtasks named in `subtask_ids_json`, a JSON list of strings.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envgen_plan_parse(
    plan_json: *const c_char,
    subtask_ids_json: *const c_char,
    out: *mut *mut EnvgenPlan,
) -> EnvgenStatus {
    guard(|| {
        let document = text(plan_json, "plan_json")?;
        let ids: Vec<String> = serde_json::from_str(text(subtask_ids_json, "subtask_ids_json")?).map_err(invalid)?;
        let trees = parse_plan_trees(document, &ids).map_err(invalid)?;
        put(out, EnvgenPlan { trees })
    })
}

/// Number of root-to-leaf decision paths over all trees.
///
/// # Safety
/// `plan` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envgen_plan_path_count(plan: *const EnvgenPlan, out: *mut usize) -> EnvgenStatus {
    guard(|| {
        let plan = handle(plan, "plan")?;
        put_value(out, plan.trees.iter().map(|t| extract_paths(t).len()).sum())
    })
}

/// # Safety
/// `plan` must come from `envgen_plan_parse` and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn envgen_plan_free(plan: *mut EnvgenPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Every combination of one decision path per subtask.
///
/// # Safety
/// `plan` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envgen_trajectories_enumerate(plan: *const EnvgenPlan, out: *mut *mut EnvgenTrajectories) -> EnvgenStatus {
    guard(|| {
        let plan = handle(plan, "plan")?;
        let sets: Vec<_> = plan.trees.iter().map(extract_paths).collect();
        let items: Vec<LogicalTrajectory> = cartesian_trajectories(&sets).map_err(invalid)?.collect();
        put(out, EnvgenTrajectories { subtasks: plan.trees.iter().map(|t| t.subtask_id.clone()).collect(), items })
    })
}

/// A small subset covering every decision path of `set`.
///
/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envgen_trajectories_minimal(set: *const EnvgenTrajectories, out: *mut *mut EnvgenTrajectories) -> EnvgenStatus {
    guard(|| {
        let set = handle(set, "set")?;
        let items = minimal_trajectory_selection(&set.items);
        put(out, EnvgenTrajectories { subtasks: set.subtasks.clone(), items })
    })
}

/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envgen_trajectories_len(set: *const EnvgenTrajectories, out: *mut usize) -> EnvgenStatus {
    guard(|| put_value(out, handle(set, "set")?.items.len()))
}

/// The trajectory set as a JSON document.
///
/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envgen_trajectories_to_json(set: *const EnvgenTrajectories, out: *mut *mut c_char) -> EnvgenStatus {
    guard(|| {
        let set = handle(set, "set")?;
        let doc = TrajectorySetDoc::new(set.subtasks.clone(), &set.items);
        put_string(out, serde_json::to_string_pretty(&doc).map_err(invalid)?)
    })
}

/// # Safety
/// `set` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn envgen_trajectories_free(set: *mut EnvgenTrajectories) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Parses a complete environment document.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envgen_environment_parse(json: *const c_char, out: *mut *mut EnvgenEnvironment) -> EnvgenStatus {
    guard(|| {
        let spec = deserialize(text(json, "json")?).map_err(invalid)?;
        put(out, EnvgenEnvironment { spec })
    })
}

/// Places the objects, doors and windows of an environment document whose
/// placements may be missing, relaxing enrichment relations if needed.
/// `solver_json` holds solver settings and may be NULL for the defaults.
///
/// # Safety
/// String arguments must be NUL-terminated or NULL where allowed; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envgen_environment_arrange(
    json: *const c_char,
    solver_json: *const c_char,
    out: *mut *mut EnvgenEnvironment,
) -> EnvgenStatus {
    guard(|| {
        let mut spec: EnvironmentSpec = serde_json::from_str(text(json, "json")?).map_err(invalid)?;
        let config: SolverConfig = match optional_text(solver_json, "solver_json")? {
            Some(s) => serde_json::from_str(s).map_err(invalid)?,
            None => SolverConfig::default(),
        };
        spec.validate().map_err(invalid)?;
        arrange(&mut spec, &config).map_err(|e| match e {
            BuildError::UnsatisfiableScene { .. } => (EnvgenStatus::Unsatisfiable, e.to_string()),
            other => invalid(other),
        })?;
        spec.metadata = rebuild_metadata(&spec).map_err(invalid)?;
        put(out, EnvgenEnvironment { spec })
    })
}

/// # Safety
/// `env` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envgen_environment_to_json(env: *const EnvgenEnvironment, out: *mut *mut c_char) -> EnvgenStatus {
    guard(|| {
        let env = handle(env, "env")?;
        put_string(out, envgen::environment::serialize(&env.spec).map_err(invalid)?)
    })
}

/// Looks up `entity.attribute` in the environment metadata; missing entries
/// read as `absent`.
///
/// # Safety
/// `env` must be a live handle, strings NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn envgen_environment_metadata(
    env: *const EnvgenEnvironment,
    entity: *const c_char,
    attribute: *const c_char,
    out: *mut *mut c_char,
) -> EnvgenStatus {
    guard(|| {
        let env = handle(env, "env")?;
        let value = env.spec.metadata.value(text(entity, "entity")?, text(attribute, "attribute")?);
        put_string(out, value.to_string())
    })
}

/// Runs the physical plausibility checks and writes a mask of
/// `ENVGEN_PHYSICS_*` bits for the dimensions that pass.
///
/// # Safety
/// `env` must be a live handle; `out_mask` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envgen_environment_check_physics(env: *const EnvgenEnvironment, out_mask: *mut u32) -> EnvgenStatus {
    guard(|| {
        let env = handle(env, "env")?;
        let report: PhysicsReport = check_all(&env.spec, &SolverConfig::default().thresholds);
        let mask = u32::from(report.floor_plan.passed) * ENVGEN_PHYSICS_FLOOR_PLAN
            | u32::from(report.entity.passed) * ENVGEN_PHYSICS_ENTITY
            | u32::from(report.relation.passed) * ENVGEN_PHYSICS_RELATION;
        put_value(out_mask, mask)
    })
}

/// # Safety
/// `env` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn envgen_environment_free(env: *mut EnvgenEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Runs every pipeline stage for a task under cassette replay, writing the
/// run directory `out_dir`. `catalog_path` may be NULL to use `catalog.json`
/// next to the task file.
///
/// # Safety
/// String arguments must be NUL-terminated or NULL where allowed.
#[no_mangle]
pub unsafe extern "C" fn envgen_run_all(
    task_path: *const c_char,
    cassette_path: *const c_char,
    catalog_path: *const c_char,
    out_dir: *const c_char,
    seed: u64,
) -> EnvgenStatus {
    guard(|| {
        let task = PathBuf::from(text(task_path, "task_path")?);
        let cassette = PathBuf::from(text(cassette_path, "cassette_path")?);
        let catalog = match optional_text(catalog_path, "catalog_path")? {
            Some(c) => PathBuf::from(c),
            None => task.parent().map(|d| d.join("catalog.json")).unwrap_or_else(|| PathBuf::from("catalog.json")),
        };
        let mut config = RunConfig::new(task, ProviderMode::Replay { cassette }, catalog, PathBuf::from(text(out_dir, "out_dir")?));
        config.seed = seed;
        cmd_run_all(config).map_err(|e| match e {
            PipelineError::Config(_) => (EnvgenStatus::ConfigError, e.to_string()),
            _ => (EnvgenStatus::StageFailed, e.to_string()),
        })
    })
}
