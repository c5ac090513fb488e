mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use envgen::pipeline::{
    cmd_run_all, load_selection_stats, run_stages, PipelineError, RunConfig, Stage, ENVIRONMENT_INDEX, MANIFEST,
    REPORT_JSON, REPORT_MD, SIMULATION, TRAJECTORIES_FULL, TRAJECTORIES_MINIMAL,
};
use envgen::provider::ProviderMode;
use envgen::trajectory::TrajectorySetDoc;

use common::*;

fn config(out: &Path, stages: &[Stage]) -> RunConfig {
    let mut config = RunConfig::new(
        task_file(),
        ProviderMode::Replay { cassette: cassette_file() },
        fixture_dir().join("catalog.json"),
        out.to_path_buf(),
    );
    config.stages = stages.to_vec();
    config
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn json(dir: &Path, rel: &str) -> Value {
    serde_json::from_slice(&read(dir, rel)).unwrap()
}

fn envgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_envgen")).args(args).env_remove("ENVGEN_PROVIDER").output().unwrap()
}

#[test]
fn full_run_writes_every_artifact() {
    let out = tempfile::tempdir().unwrap();
    cmd_run_all(config(out.path(), &[])).unwrap();
    let full: TrajectorySetDoc = serde_json::from_slice(&read(out.path(), TRAJECTORIES_FULL)).unwrap();
    let minimal: TrajectorySetDoc = serde_json::from_slice(&read(out.path(), TRAJECTORIES_MINIMAL)).unwrap();
    assert_eq!(full.trajectories().unwrap().len(), 12);
    assert_eq!(minimal.trajectories().unwrap().len(), 3);
    let index = json(out.path(), ENVIRONMENT_INDEX);
    assert_eq!(index["environments"].as_array().unwrap().len(), 3);
    assert!(index["failures"].as_array().unwrap().is_empty());
    for env in ["env_00", "env_01", "env_02"] {
        assert!(out.path().join(format!("environments/{env}.json")).is_file());
    }
    let report = json(out.path(), REPORT_JSON);
    assert_eq!(report["logic_coverage"]["value"], 1.0);
    assert_eq!(report["scenario_validity"], 100.0);
    let markdown = String::from_utf8(read(out.path(), REPORT_MD)).unwrap();
    assert!(markdown.contains("env_02"));
    let manifest = json(out.path(), MANIFEST);
    assert_eq!(manifest["stages"].as_object().unwrap().len(), 6);
    assert_eq!(manifest["inputs"]["cassette"].as_str().unwrap().len(), 64);
    let stats = load_selection_stats(out.path()).unwrap();
    assert_eq!(stats.main_loop_visits, 12);
}

#[test]
fn later_stages_need_earlier_outputs() {
    let out = tempfile::tempdir().unwrap();
    let cases = [
        (Stage::Collect, "plans"),
        (Stage::Build, "trajectories"),
        (Stage::Validate, "environments"),
        (Stage::Simulate, "environments"),
    ];
    for (stage, missing) in cases {
        match run_stages(config(out.path(), &[stage])) {
            Err(e @ PipelineError::MissingInput { .. }) => {
                assert!(e.to_string().contains(missing), "{stage}: {e}");
                assert_eq!(e.exit_code(), 1);
            }
            other => panic!("{stage}: expected a missing input, got {other:?}"),
        }
    }
    // The report reads whatever exists and names the first stage without output.
    let err = run_stages(config(out.path(), &[Stage::Report])).unwrap_err();
    assert!(err.to_string().contains("collect"), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn stages_rerun_from_persisted_inputs() {
    let first = tempfile::tempdir().unwrap();
    cmd_run_all(config(first.path(), &[])).unwrap();
    let names = [TRAJECTORIES_FULL, TRAJECTORIES_MINIMAL, "environments/env_01.json", SIMULATION, REPORT_JSON, REPORT_MD];
    let before: Vec<_> = names.iter().map(|n| read(first.path(), n)).collect();
    for stage in [Stage::Collect, Stage::Validate, Stage::Simulate, Stage::Report] {
        run_stages(config(first.path(), &[stage])).unwrap();
    }
    for (name, bytes) in names.iter().zip(&before) {
        assert!(&read(first.path(), name) == bytes, "{name} changed on rerun");
    }

    // Stages split across separate invocations produce the same files.
    let split = tempfile::tempdir().unwrap();
    for stage in envgen::pipeline::Stage::ALL {
        run_stages(config(split.path(), &[stage])).unwrap();
    }
    for (name, bytes) in names.iter().zip(&before) {
        assert!(&read(split.path(), name) == bytes, "{name} differs when stages run one by one");
    }
}

#[test]
fn jobs_do_not_change_results() {
    let one = tempfile::tempdir().unwrap();
    let many = tempfile::tempdir().unwrap();
    let mut c = config(one.path(), &[]);
    c.jobs = 1;
    cmd_run_all(c).unwrap();
    let mut c = config(many.path(), &[]);
    c.jobs = 4;
    cmd_run_all(c).unwrap();
    for name in [ENVIRONMENT_INDEX, "environments/env_00.json", SIMULATION, REPORT_JSON] {
        assert!(read(one.path(), name) == read(many.path(), name), "{name}");
    }
}

#[test]
fn invalid_configuration_is_rejected() {
    let out = tempfile::tempdir().unwrap();
    let mut c = config(out.path(), &[]);
    c.jobs = 0;
    assert!(matches!(run_stages(c), Err(PipelineError::Config(_))));
    let mut c = config(out.path(), &[]);
    c.budget = 0;
    assert!(matches!(run_stages(c), Err(PipelineError::Config(_))));
    let mut c = config(out.path(), &[]);
    c.solver.grid_resolution = 0.0;
    assert_eq!(run_stages(c).unwrap_err().exit_code(), 2);
    let mut c = config(out.path(), &[]);
    c.provider = ProviderMode::Replay { cassette: out.path().join("missing.json") };
    assert_eq!(run_stages(c).unwrap_err().exit_code(), 2);
}

#[test]
fn command_line_exit_codes() {
    let out = tempfile::tempdir().unwrap();
    let run_dir = out.path().join("run");
    let (task, cassette, dir) = (task_file(), cassette_file(), run_dir.to_str().unwrap().to_string());
    let (task, cassette) = (task.to_str().unwrap(), cassette.to_str().unwrap());

    let ok = envgen(&["run", "--task", task, "--cassette", cassette, "--out", &dir, "--jobs", "2"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(run_dir.join(REPORT_MD).is_file());

    let rerun = envgen(&["report", "--task", task, "--cassette", cassette, "--out", &dir]);
    assert_eq!(rerun.status.code(), Some(0));

    let fresh = out.path().join("fresh");
    let missing = envgen(&["build", "--task", task, "--cassette", cassette, "--out", fresh.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing input"));

    let bad_stage = envgen(&["run", "--task", task, "--cassette", cassette, "--out", &dir, "--stages", "deploy"]);
    assert_eq!(bad_stage.status.code(), Some(2));

    let no_cassette = envgen(&["run", "--task", task, "--cassette", "/nonexistent/cassette.json", "--out", &dir]);
    assert_eq!(no_cassette.status.code(), Some(2));

    let no_provider = envgen(&["derive", "--task", task, "--out", &dir]);
    assert_eq!(no_provider.status.code(), Some(2));

    let bad_grid = envgen(&["run", "--task", task, "--cassette", cassette, "--out", &dir, "--grid", "-1"]);
    assert_eq!(bad_grid.status.code(), Some(2));

    // Nothing listens on the discard port, so the derive stage fails.
    let live = envgen(&["derive", "--task", task, "--live-endpoint", "http://127.0.0.1:9/v1", "--out", fresh.to_str().unwrap()]);
    assert_eq!(live.status.code(), Some(1), "{}", String::from_utf8_lossy(&live.stderr));
}

#[test]
fn seed_is_recorded_and_applied() {
    let out = tempfile::tempdir().unwrap();
    let mut c = config(out.path(), &[Stage::Derive, Stage::Collect, Stage::Build]);
    c.seed = 7;
    run_stages(c).unwrap();
    let manifest = json(out.path(), MANIFEST);
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["solver"]["seed"], 7);
}
