mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use tracker_core::eval::{evaluate, ActionMode, EvalSettings};
use tracker_core::grid::read_obstacles_csv;
use tracker_core::kpi::{EpisodeTrace, DEFAULT_CHECKPOINTS, DEFAULT_REACH_TOLERANCE};
use tracker_core::ppo::{train, TrainOptions, TrainingScenarios};
use tracker_core::scenario::{file_hash, load_scenario, ScenarioFile};
use tracker_core::vehicle::ACTION_COUNT;
use tracker_core::{env::OBS_DIM, DenseNet, Head};

use config::{FileHash, RunConfig, RunMetadata};

#[derive(Parser)]
#[command(name = "reactive-tracker", version, about = "Train and evaluate a reactive path-tracking controller")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train policy and value networks with PPO.
    Train(TrainArgs),
    /// Roll out a policy and write traces plus a KPI report.
    Eval(EvalArgs),
    /// Render a trace as a four-panel SVG.
    Plot(PlotArgs),
    /// Print the layout of a weight file.
    InspectWeights(InspectArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    total_timesteps: Option<usize>,
    /// Run directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Scenario JSON.
    #[arg(long, required_unless_present = "run")]
    config: Option<PathBuf>,
    /// Policy weight file.
    #[arg(long, required_unless_present = "run")]
    weights: Option<PathBuf>,
    /// Training run directory; supplies weights and scenario.
    #[arg(long, conflicts_with_all = ["config", "weights"])]
    run: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pick the most probable action instead of sampling.
    #[arg(long)]
    deterministic: bool,
    /// Add one circular obstacle of this radius on the path, drawn per episode.
    #[arg(long)]
    obstacle_radius: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_CHECKPOINTS)]
    checkpoints: usize,
    #[arg(long, default_value_t = DEFAULT_REACH_TOLERANCE)]
    tolerance: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Target path CSV.
    #[arg(long)]
    path: PathBuf,
    #[arg(long)]
    obstacles: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    weights: PathBuf,
}

/// Why a command failed; decides the exit code.
enum Failure {
    /// Bad configuration or input data.
    Input(anyhow::Error),
    /// Training started but could not finish.
    Training(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Training(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Training(e) | Failure::Other(e) => e,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn input<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Input)
}

fn io<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Other)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Plot(a) => cmd_plot(a),
        Command::InspectWeights(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let mut cfg = input(RunConfig::read(&args.config))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.total_timesteps {
        cfg.ppo.total_timesteps = n;
    }
    if let Some(out) = args.out {
        cfg.out = Some(out);
    }
    let out = input(
        cfg.out
            .clone()
            .ok_or_else(|| anyhow!("no run directory: pass --out or set \"out\" in {}", args.config.display())),
    )?;
    input(cfg.ppo.validate().with_context(|| format!("{}: field \"ppo\"", args.config.display())))?;
    let scenario = input(load_scenario(&cfg.scenario).map_err(anyhow::Error::from))?;
    let scenarios = TrainingScenarios::new(scenario, cfg.curriculum);
    input(
        scenarios
            .validate()
            .with_context(|| format!("{}: field \"curriculum\"", args.config.display())),
    )?;
    let threads = input(TrainOptions::threads_from_env().map_err(anyhow::Error::from))?;

    let scenario_file = input(ScenarioFile::read(&cfg.scenario).map_err(anyhow::Error::from))?;
    let mut scenario_files = vec![cfg.scenario.clone()];
    scenario_files.extend(scenario_file.data_files(&cfg.scenario));
    let scenario_files = input(
        scenario_files
            .into_iter()
            .map(|p| Ok(FileHash { sha256: file_hash(&p)?, path: p }))
            .collect::<anyhow::Result<Vec<_>>>(),
    )?;

    let options = TrainOptions {
        threads,
        out_dir: Some(out.clone()),
    };
    log::info!(
        "training {} timesteps, seed {}, into {}",
        cfg.ppo.total_timesteps,
        cfg.seed,
        out.display()
    );
    let outcome = train(&scenarios, &cfg.ppo, cfg.seed, &options).map_err(|e| match e {
        tracker_core::Error::NonFiniteLoss { .. } | tracker_core::Error::InvalidState(_) => {
            Failure::Training(e.into())
        }
        tracker_core::Error::Io(_) | tracker_core::Error::File { .. } => Failure::Other(e.into()),
        other => Failure::Training(other.into()),
    })?;
    let meta = RunMetadata {
        seed: cfg.seed,
        config: cfg,
        threads,
        policy_weights: "policy.json".into(),
        value_weights: "value.json".into(),
        scenario_files,
        updates: outcome.log.len(),
        version: env!("CARGO_PKG_VERSION").into(),
    };
    let text = io(serde_json::to_string_pretty(&meta).map_err(anyhow::Error::from))?;
    io(std::fs::write(out.join(RunMetadata::FILE), text + "\n").context("writing run metadata"))?;
    println!("{} updates written to {}", outcome.log.len(), out.display());
    Ok(())
}

fn check_policy(net: &DenseNet, path: &Path) -> anyhow::Result<()> {
    if net.head() != Head::Softmax || net.input_dim() != OBS_DIM || net.output_dim() != ACTION_COUNT {
        bail!(
            "{}: a policy needs {} inputs and {} softmax outputs, the file has {} inputs and {} {:?} outputs",
            path.display(),
            OBS_DIM,
            ACTION_COUNT,
            net.input_dim(),
            net.output_dim(),
            net.head()
        );
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let (scenario_path, weights_path) = match &args.run {
        Some(dir) => {
            let meta = input(RunMetadata::read(dir))?;
            (meta.config.scenario, dir.join(meta.policy_weights))
        }
        None => (
            args.config.clone().expect("required by clap"),
            args.weights.clone().expect("required by clap"),
        ),
    };
    if args.episodes == 0 {
        return Err(Failure::Input(anyhow!("--episodes must be at least 1")));
    }
    if let Some(r) = args.obstacle_radius {
        if !(r.is_finite() && r > 0.0) {
            return Err(Failure::Input(anyhow!("--obstacle-radius must be positive, got {r}")));
        }
    }
    if !(args.tolerance.is_finite() && args.tolerance > 0.0) {
        return Err(Failure::Input(anyhow!("--tolerance must be positive, got {}", args.tolerance)));
    }
    let policy = input(DenseNet::load_weights(&weights_path).map_err(anyhow::Error::from))?;
    input(check_policy(&policy, &weights_path))?;
    let base = input(load_scenario(&scenario_path).map_err(anyhow::Error::from))?;

    let settings = EvalSettings {
        episodes: args.episodes,
        mode: if args.deterministic {
            ActionMode::Greedy
        } else {
            ActionMode::Sample
        },
        seed: args.seed,
        checkpoints: args.checkpoints,
        tolerance: args.tolerance,
    };
    let radius = args.obstacle_radius;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(args.seed);
    let (report, traces) = evaluate(
        &policy,
        &settings,
        |_, seed| match radius {
            Some(r) => base.with_obstacle_on_path(seed, r, 8.0),
            None => Ok(base.clone()),
        },
        &mut rng,
    )
    .map_err(|e| Failure::Other(e.into()))?;

    io(std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display())))?;
    for (i, trace) in traces.iter().enumerate() {
        io(trace.write_csv(args.out.join(format!("trace_{i:03}.csv"))).map_err(anyhow::Error::from))?;
    }
    io(report.write(args.out.join("kpi_report.json")).map_err(anyhow::Error::from))?;
    println!(
        "kappa2 {:.4}  kappa_reach {:.3}  kappa_dist {:.3}  kappa_danger {:.4}",
        report.kappa2, report.kappa_reach, report.kappa_dist, report.kappa_danger
    );
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> CmdResult {
    let trace = input(EpisodeTrace::read_csv(&args.trace).map_err(anyhow::Error::from))?;
    if trace.steps.is_empty() {
        return Err(Failure::Input(anyhow!("{}: trace has no rows", args.trace.display())));
    }
    let path = input(tracker_core::Path::read_csv(&args.path).map_err(anyhow::Error::from))?;
    let obstacles = match &args.obstacles {
        Some(p) => Some(input(read_obstacles_csv(p).map_err(anyhow::Error::from))?),
        None => None,
    };
    let svg = plot::render(&trace, &path, obstacles.as_deref());
    io(std::fs::write(&args.out, svg).with_context(|| format!("writing {}", args.out.display())))?;
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> CmdResult {
    let net = input(DenseNet::load_weights(&args.weights).map_err(anyhow::Error::from))?;
    let hash = input(file_hash(&args.weights).map_err(anyhow::Error::from))?;
    println!("file        {}", args.weights.display());
    println!("sha256      {hash}");
    println!("format      {}", tracker_core::net::FORMAT_VERSION);
    println!("head        {:?}", net.head());
    println!(
        "layers      {}",
        net.sizes().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" -> ")
    );
    println!("parameters  {}", net.param_count());
    let norm = net.params().iter().map(|p| p * p).sum::<f64>().sqrt();
    println!("l2 norm     {norm:.6}");
    Ok(())
}
