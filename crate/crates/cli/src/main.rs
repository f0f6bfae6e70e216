//! `narrowgap` command-line front end.
//!
//! Exit codes: 0 = the command ran, 1 = internal error, 2 = usage or
//! configuration error.

mod run;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::{UnitQuaternion, Vector3};
use narrowgap::dynamics::{fit_thrust_map, load_calibration_csv, QuadrotorState};
use narrowgap::env::protocol::serve;
use narrowgap::env::{
    generate_dataset_counted, BatchBinding, EpisodeConfig, ResolvedConfig, SeedGenConfig, SeedTrajectoryDataset,
    TrackSource, PROTOCOL_VERSION,
};
use narrowgap::geometry::{clearance_check, randomize_track, Clearance, PRESET_NAMES};
use narrowgap::planner::{monte_carlo_success, write_success_csv, BaselineConfig, MonteCarloGrid, PlannerError};
use narrowgap::randomization::RANDOMIZATION_PRESETS;
use narrowgap::seeding::{derive_seed, rng_from};
use narrowgap::sensing::render_mask_with;
use serde::Serialize;

use run::{PolicyKind, RunSpec};

#[derive(Parser)]
#[command(name = "narrowgap", version, about = "Quadrotor narrow-gap traversal simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run episodes with a scripted or remote policy and write per-step logs.
    Rollout(RolloutArgs),
    /// Success statistics only, no per-step logs.
    Eval(EvalArgs),
    /// Generate an informed-reset trajectory dataset.
    Dataset(DatasetArgs),
    /// Baseline planner Monte Carlo over a noise grid; CSV out.
    PlannerMc(PlannerMcArgs),
    /// Render the gap mask seen from one pose as a PGM image.
    RenderMask(RenderMaskArgs),
    /// Serve the batch binding over a local TCP socket.
    Serve(ServeArgs),
    /// Fit thrust-map parameters to a calibration CSV.
    FitThrust(FitThrustArgs),
    /// List track and randomization presets, or print one track.
    Presets(PresetsArgs),
}

#[derive(Args, Clone)]
struct EnvArgs {
    /// Episode config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Track preset, overriding the config's track.
    #[arg(long)]
    preset: Option<String>,
    /// Informed-reset dataset (JSON lines).
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EpisodeArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value_t = PolicyKind::Tracker)]
    policy: PolicyKind,
    /// Policy server address for `--policy remote`.
    #[arg(long)]
    remote: Option<SocketAddr>,
}

#[derive(Args)]
struct RolloutArgs {
    #[command(flatten)]
    run: EpisodeArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: EpisodeArgs,
    /// Summary JSON path; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlannerMcArgs {
    /// Grid config (TOML); defaults to the 4x2x1x2 grid.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Overrides the grid's seed count per cell.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// CSV path; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderMaskArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Seed for the gap pose draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    gap: usize,
    /// Camera pose `x,y,z,roll,pitch,yaw` (m, degrees); default 2 m in
    /// front of the gap, facing it.
    #[arg(long, allow_hyphen_values = true)]
    pose: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 1)]
    envs: usize,
    #[arg(long, default_value = "127.0.0.1:5555")]
    addr: SocketAddr,
    /// Exit after this many client connections.
    #[arg(long)]
    max_connections: Option<usize>,
}

#[derive(Args)]
struct FitThrustArgs {
    /// CSV with columns voltage, throttle, thrust.
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PresetsArgs {
    /// Print this track preset as TOML.
    #[arg(long)]
    show: Option<String>,
}

/// Usage/config problems (exit 2) vs everything else (exit 1).
enum Failure {
    Usage(anyhow::Error),
    Internal(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Internal(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn load_config(args: &EnvArgs) -> Result<(Arc<ResolvedConfig>, EpisodeConfig), Failure> {
    let mut cfg = match &args.config {
        Some(p) => EpisodeConfig::load(p).map_err(usage)?,
        None => EpisodeConfig::default(),
    };
    if let Some(name) = &args.preset {
        cfg.track = TrackSource::Preset(name.clone());
    }
    let resolved = cfg.resolve().map_err(usage)?;
    Ok((Arc::new(resolved), cfg))
}

fn load_dataset(args: &EnvArgs) -> Result<Arc<SeedTrajectoryDataset>, Failure> {
    Ok(Arc::new(match &args.dataset {
        Some(p) => SeedTrajectoryDataset::load(p).map_err(usage)?,
        None => SeedTrajectoryDataset::default(),
    }))
}

fn episode_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| derive_seed(seed, &[i])).collect()
}

fn check_workers(workers: usize) -> CmdResult {
    if workers == 0 {
        return Err(usage(anyhow!("--workers must be at least 1")));
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

/// Everything needed to rerun a rollout.
#[derive(Serialize)]
struct RunManifest<'a> {
    version: &'static str,
    protocol: &'static str,
    command: &'a str,
    config_path: Option<String>,
    dataset_path: Option<String>,
    policy: String,
    seed: u64,
    seeds: &'a [u64],
    output_dir: String,
    /// Episode config with command-line overrides applied.
    config: String,
}

fn episode_spec<'a>(
    args: &EpisodeArgs,
    seeds: &'a [u64],
    log_dir: Option<&'a Path>,
) -> Result<(RunSpec<'a>, EpisodeConfig), Failure> {
    check_workers(args.workers)?;
    if args.policy == PolicyKind::Remote && args.remote.is_none() {
        return Err(usage(anyhow!("--policy remote needs --remote <addr>")));
    }
    let (cfg, raw) = load_config(&args.env)?;
    let spec = RunSpec {
        cfg,
        dataset: load_dataset(&args.env)?,
        policy: args.policy,
        remote: args.remote,
        seeds,
        workers: args.workers,
        log_dir,
    };
    Ok((spec, raw))
}

fn cmd_rollout(args: RolloutArgs) -> CmdResult {
    let seeds = episode_seeds(args.run.seed, args.run.episodes);
    let log_dir = args.out.join("episodes");
    let (spec, raw) = episode_spec(&args.run, &seeds, Some(&log_dir))?;
    let summary = run::run(&spec)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        protocol: PROTOCOL_VERSION,
        command: "rollout",
        config_path: args.run.env.config.as_ref().map(|p| p.display().to_string()),
        dataset_path: args.run.env.dataset.as_ref().map(|p| p.display().to_string()),
        policy: format!("{:?}", args.run.policy).to_lowercase(),
        seed: args.run.seed,
        seeds: &seeds,
        output_dir: args.out.display().to_string(),
        config: raw.to_toml_string()?,
    };
    write_json(&manifest, Some(&args.out.join("manifest.json")))?;
    write_json(&summary, Some(&args.out.join("summary.json")))?;
    eprintln!(
        "{} episodes: {} success, {} collision, {} timeout -> {}",
        summary.episodes,
        summary.successes,
        summary.collisions,
        summary.timeouts,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let seeds = episode_seeds(args.run.seed, args.run.episodes);
    let (spec, _) = episode_spec(&args.run, &seeds, None)?;
    let summary = run::run(&spec)?;
    write_json(&summary, args.out.as_deref())?;
    Ok(())
}

#[derive(Serialize)]
struct DatasetReport {
    trajectories: usize,
    rejected_draws: usize,
    failure_rate: f64,
}

fn cmd_dataset(args: DatasetArgs) -> CmdResult {
    let (cfg, _) = load_config(&args.env)?;
    let (data, rejected) = generate_dataset_counted(
        &cfg.track,
        args.count,
        &cfg.episode.collider,
        &SeedGenConfig::default(),
        &mut rng_from(args.seed),
    )?;
    data.save(&args.out)?;
    let draws = data.len() + rejected;
    let report = DatasetReport {
        trajectories: data.len(),
        rejected_draws: rejected,
        failure_rate: if draws == 0 { 0.0 } else { rejected as f64 / draws as f64 },
    };
    write_json(&report, None)?;
    Ok(())
}

fn cmd_planner_mc(args: PlannerMcArgs) -> CmdResult {
    check_workers(args.workers)?;
    let mut grid = match &args.grid {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(usage)?;
            toml::from_str::<MonteCarloGrid>(&text).with_context(|| format!("parsing {}", p.display())).map_err(usage)?
        }
        None => MonteCarloGrid::default(),
    };
    grid.base_seed = args.seed;
    if let Some(n) = args.episodes {
        grid.seeds = n;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.workers).build()?;
    let cells = match pool.install(|| monte_carlo_success(&grid, &BaselineConfig::default())) {
        Ok(c) => c,
        Err(e @ (PlannerError::EmptyGrid(_) | PlannerError::InvalidNoise(_) | PlannerError::InvalidScenario(_))) => {
            return Err(usage(e))
        }
        Err(e) => return Err(e.into()),
    };
    match &args.out {
        Some(p) => write_success_csv(&cells, BufWriter::new(File::create(p)?))?,
        None => write_success_csv(&cells, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_render_mask(args: RenderMaskArgs) -> CmdResult {
    let (cfg, _) = load_config(&args.env)?;
    let gaps = randomize_track(&cfg.track, &mut rng_from(args.seed));
    let gap = gaps
        .get(args.gap)
        .ok_or_else(|| usage(anyhow!("track has {} gaps, --gap {} out of range", gaps.len(), args.gap)))?;
    let state = match &args.pose {
        Some(text) => {
            let p: Vec<f64> = text
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| usage(anyhow!("--pose {text:?}: {e}")))?;
            let [x, y, z, roll, pitch, yaw] = p[..] else {
                return Err(usage(anyhow!("--pose needs 6 comma-separated values, got {}", p.len())));
            };
            QuadrotorState {
                attitude: UnitQuaternion::from_euler_angles(roll.to_radians(), pitch.to_radians(), yaw.to_radians()),
                ..QuadrotorState::at_rest(Vector3::new(x, y, z))
            }
        }
        None => {
            let n = gap.normal;
            QuadrotorState {
                attitude: UnitQuaternion::from_euler_angles(0.0, 0.0, n.y.atan2(n.x)),
                ..QuadrotorState::at_rest(gap.center - 2.0 * n)
            }
        }
    };
    let img = render_mask_with(&state, gap, &cfg.episode.camera, &cfg.episode.render);
    img.write_pgm(BufWriter::new(File::create(&args.out)?))?;
    let clear = clearance_check(&state, gap, &cfg.episode.collider).class;
    eprintln!(
        "{}x{} mask, {} gap pixels, pose clearance {clear:?}{}",
        img.width,
        img.height,
        img.count(),
        if clear == Clearance::Collision { " (inside the frame)" } else { "" }
    );
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> CmdResult {
    if args.envs == 0 {
        return Err(usage(anyhow!("--envs must be at least 1")));
    }
    let (cfg, _) = load_config(&args.env)?;
    let mut binding = BatchBinding::new(cfg, load_dataset(&args.env)?, args.envs);
    let listener = TcpListener::bind(args.addr).with_context(|| format!("binding {}", args.addr))?;
    eprintln!("serving {PROTOCOL_VERSION} with {} envs on {}", args.envs, listener.local_addr()?);
    serve(&mut binding, listener, args.max_connections)?;
    Ok(())
}

fn cmd_fit_thrust(args: FitThrustArgs) -> CmdResult {
    let samples = load_calibration_csv(&args.csv).map_err(usage)?;
    let fit = fit_thrust_map(&samples).map_err(usage)?;
    write_json(&fit, args.out.as_deref())?;
    Ok(())
}

fn cmd_presets(args: PresetsArgs) -> CmdResult {
    match args.show {
        Some(name) => {
            let track = narrowgap::geometry::preset(&name).map_err(usage)?;
            print!("{}", toml::to_string(&track)?);
        }
        None => {
            println!("tracks: {}", PRESET_NAMES.join(", "));
            println!("randomization: {}", RANDOMIZATION_PRESETS.join(", "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors by itself
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rollout(a) => cmd_rollout(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Dataset(a) => cmd_dataset(a),
        Command::PlannerMc(a) => cmd_planner_mc(a),
        Command::RenderMask(a) => cmd_render_mask(a),
        Command::Serve(a) => cmd_serve(a),
        Command::FitThrust(a) => cmd_fit_thrust(a),
        Command::Presets(a) => cmd_presets(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
