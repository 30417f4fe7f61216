use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aerial_sim::assets::{generate_tree, TreeSpec};
use aerial_sim::bench::{bench_dynamics, bench_render, run_demo, BenchReport, DemoOptions, DynamicsBench, RenderBench};
use aerial_sim::config::{CameraConfig, ControlMode, SimConfig};
use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aerial-sim", version, about = "Batched multirotor simulator: benchmarks, demo runs and asset generation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Measure simulation or rendering throughput.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Fly a scripted goal-reaching policy for one episode per env.
    Demo(DemoArgs),
    /// Generate obstacle assets.
    #[command(subcommand)]
    Assetgen(AssetCmd),
    /// Inspect configuration files.
    #[command(subcommand)]
    Config(ConfigCmd),
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Controller and integrator throughput without obstacles or sensors.
    Dynamics(DynamicsArgs),
    /// Depth camera throughput in a forest of generated trees.
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Attitude,
    Velocity,
}

impl From<Mode> for ControlMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Attitude => ControlMode::Attitude,
            Mode::Velocity => ControlMode::Velocity,
        }
    }
}

#[derive(Args)]
struct DynamicsArgs {
    #[arg(long, default_value_t = 1024)]
    envs: usize,
    #[arg(long, default_value_t = 1000)]
    steps: u32,
    #[arg(long, value_enum, default_value_t = Mode::Velocity)]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = aerial_sim::bench::WARMUP_STEPS)]
    warmup: u32,
    /// Where to write the JSON report.
    #[arg(long, default_value = "bench_dynamics.json")]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long, default_value_t = 64)]
    envs: usize,
    #[arg(long, default_value_t = 10)]
    frames: u32,
    #[arg(long, default_value_t = 480)]
    width: u32,
    #[arg(long, default_value_t = 270)]
    height: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Generated trees per env.
    #[arg(long, default_value_t = 8)]
    trees: usize,
    #[arg(long, default_value = "bench_render.json")]
    out: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `env.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Dump depth images every N steps (camera must be enabled).
    #[arg(long)]
    depth_every: Option<u32>,
    /// Cruise speed of the scripted policy, m/s.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
}

#[derive(Subcommand)]
enum AssetCmd {
    /// Procedural tree built from cylinders, written as URDF.
    Tree(TreeArgs),
}

#[derive(Args)]
struct TreeArgs {
    #[arg(long, default_value_t = 3)]
    depth: u32,
    #[arg(long, default_value_t = 3)]
    branch_factor: u32,
    #[arg(long, default_value_t = 2.0)]
    trunk_length: f64,
    #[arg(long, default_value_t = 0.15)]
    trunk_radius: f64,
    #[arg(long, default_value_t = 0.6)]
    length_decay: f64,
    #[arg(long, default_value_t = 0.6)]
    radius_decay: f64,
    #[arg(long, default_value_t = 0.8)]
    angle_range: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; prints to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of trees to write, seeds `seed..seed+count`, into the
    /// directory given by `--out`.
    #[arg(long)]
    count: Option<u64>,
}

#[derive(Subcommand)]
enum ConfigCmd {
    /// Print the default configuration.
    Default,
    /// Validate a configuration file.
    Check { path: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Cmd::Bench(BenchCmd::Dynamics(a)) => {
            let opts = DynamicsBench {
                num_envs: a.envs,
                steps: a.steps,
                mode: a.mode.into(),
                seed: a.seed,
                workers: a.workers,
                warmup: a.warmup,
                ..DynamicsBench::default()
            };
            emit(&bench_dynamics(&opts)?, &a.out)
        }
        Cmd::Bench(BenchCmd::Render(a)) => {
            let opts = RenderBench {
                num_envs: a.envs,
                frames: a.frames,
                camera: CameraConfig {
                    enabled: true,
                    width: a.width,
                    height: a.height,
                    ..CameraConfig::default()
                },
                seed: a.seed,
                workers: a.workers,
                trees_per_env: a.trees,
            };
            opts.camera.validate()?;
            emit(&bench_render(&opts)?, &a.out)
        }
        Cmd::Demo(a) => demo(a),
        Cmd::Assetgen(AssetCmd::Tree(a)) => assetgen_tree(a),
        Cmd::Config(ConfigCmd::Default) => {
            print!("{}", SimConfig::default().to_yaml());
            Ok(())
        }
        Cmd::Config(ConfigCmd::Check { path }) => {
            let cfg = load_config(&path)?;
            println!(
                "{}: ok ({} envs, {} asset classes, dt {} s)",
                path.display(),
                cfg.env.num_envs,
                cfg.asset_classes.len(),
                cfg.env.dt
            );
            Ok(())
        }
    }
}

fn load_config(path: &Path) -> anyhow::Result<SimConfig> {
    SimConfig::from_path(path).with_context(|| format!("loading config {}", path.display()))
}

fn emit(report: &BenchReport, out: &Path) -> anyhow::Result<()> {
    print!("{}", report.to_text());
    std::fs::write(out, report.to_json()).with_context(|| format!("writing {}", out.display()))?;
    log::info!("report written to {}", out.display());
    Ok(())
}

fn demo(a: DemoArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.env.seed = seed;
    }
    let opts = DemoOptions {
        speed: a.speed,
        depth_every: a.depth_every,
    };
    let summary = run_demo(&cfg, &a.out, &opts)?;
    for e in &summary.episodes {
        println!(
            "env {:>4}: {:<13} after {:>5} steps ({:.2} s), final distance {:.3} m",
            e.env, e.outcome, e.steps, e.time, e.final_distance
        );
    }
    println!(
        "{}/{} goals reached; trace in {}",
        summary.goals_reached,
        summary.num_envs,
        a.out.join("trace.csv").display()
    );
    Ok(())
}

fn assetgen_tree(a: TreeArgs) -> anyhow::Result<()> {
    let spec = |seed| TreeSpec {
        trunk_length: a.trunk_length,
        trunk_radius: a.trunk_radius,
        branch_factor: a.branch_factor,
        depth: a.depth,
        length_decay: a.length_decay,
        radius_decay: a.radius_decay,
        angle_range: a.angle_range,
        seed,
    };
    match (a.count, &a.out) {
        (Some(count), Some(dir)) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for seed in a.seed..a.seed + count {
                let tree = generate_tree(&spec(seed))?;
                let path = dir.join(format!("tree_{seed}.urdf"));
                std::fs::write(&path, &tree.urdf).with_context(|| format!("writing {}", path.display()))?;
            }
            log::info!("wrote {count} trees to {}", dir.display());
        }
        (Some(_), None) => anyhow::bail!("--count needs --out <directory>"),
        (None, Some(path)) => {
            let tree = generate_tree(&spec(a.seed))?;
            std::fs::write(path, &tree.urdf).with_context(|| format!("writing {}", path.display()))?;
            log::info!("{} primitives written to {}", tree.prototype.primitives.len(), path.display());
        }
        (None, None) => print!("{}", generate_tree(&spec(a.seed))?.urdf),
    }
    Ok(())
}
