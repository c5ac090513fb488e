use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use envgen::layout::SolverConfig;
use envgen::pipeline::{parse_stages, run_stages, PipelineError, RunConfig, Stage};
use envgen::provider::ProviderMode;

#[derive(Parser)]
#[command(name = "envgen", version, about = "Generate logically diverse test environments for embodied task planners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive behavior plans for the task.
    Derive(Common),
    /// Enumerate logical trajectories and select the minimal set.
    Collect(Common),
    /// Build one environment per selected trajectory.
    Build(Common),
    /// Check physical plausibility of the built environments.
    Validate(Common),
    /// Run the task's behavior-tree policies in every environment.
    Simulate(Common),
    /// Aggregate everything into the run report.
    Report(Common),
    /// Run the stages chosen by --stages (all by default).
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Task file (`task.json` inside a task directory).
    #[arg(long)]
    task: PathBuf,
    /// Replay recorded model responses from this cassette.
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Call a live model endpoint; with --cassette, record into it.
    #[arg(long)]
    live_endpoint: Option<String>,
    /// Asset catalog; defaults to `catalog.json` next to the task file.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Run directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Placement grid step in meters.
    #[arg(long)]
    grid: Option<f64>,
    /// `all` or a comma-separated list of stages (only used by `run`).
    #[arg(long, default_value = "all")]
    stages: String,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Tick budget per simulation.
    #[arg(long)]
    budget: Option<u64>,
}

fn config(common: Common, stages: Vec<Stage>) -> Result<RunConfig, PipelineError> {
    let provider = match (&common.live_endpoint, &common.cassette) {
        (Some(endpoint), record) => ProviderMode::Live { endpoint: endpoint.clone(), record: record.clone() },
        (None, cassette) => ProviderMode::resolve(cassette.clone(), None).map_err(|e| PipelineError::Config(e.to_string()))?,
    };
    let catalog = common
        .catalog
        .clone()
        .unwrap_or_else(|| common.task.parent().unwrap_or(std::path::Path::new(".")).join("catalog.json"));
    let mut config = RunConfig::new(common.task, provider, catalog, common.out);
    config.seed = common.seed;
    config.stages = stages;
    if let Some(grid) = common.grid {
        config.solver = SolverConfig { grid_resolution: grid, ..config.solver };
    }
    if let Some(jobs) = common.jobs {
        config.jobs = jobs;
    }
    if let Some(budget) = common.budget {
        config.budget = budget;
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, stages) = match cli.command {
        Command::Derive(c) => (c, Ok(vec![Stage::Derive])),
        Command::Collect(c) => (c, Ok(vec![Stage::Collect])),
        Command::Build(c) => (c, Ok(vec![Stage::Build])),
        Command::Validate(c) => (c, Ok(vec![Stage::Validate])),
        Command::Simulate(c) => (c, Ok(vec![Stage::Simulate])),
        Command::Report(c) => (c, Ok(vec![Stage::Report])),
        Command::Run(c) => {
            let stages = parse_stages(&c.stages);
            (c, stages)
        }
    };
    let result = stages
        .map_err(PipelineError::Config)
        .and_then(|stages| config(common, stages))
        .and_then(run_stages);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
