//! Throughput benchmarks and the scripted demo.
//!
//! Dynamics throughput counts the full pipeline: controller, actuator
//! saturation and integration, for every robot, every step. Render
//! throughput counts one physics step plus one camera batch per frame.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::assets::{generate_tree, AssetClassConfig, AssetError, AssetPools, TreeSpec};
use crate::config::{CameraConfig, ControlMode, SimConfig};
use crate::control::{control_batch, AttitudeCommand, Command, VelocityCommand};
use crate::dynamics::{step_batch, StateBatch};
use crate::env::{EnvError, World};
use crate::se3::Vec3;
use crate::sensor::{DepthBatch, SensorError};

/// Untimed steps run before the clock starts.
pub const WARMUP_STEPS: u32 = 100;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid benchmark parameters: {0}")]
    Invalid(&'static str),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// 64-bit FNV-1a, used for reproducibility checksums.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv1a {
    pub fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_u32(&mut self, v: u32) {
        self.write(&v.to_le_bytes());
    }

    pub fn write_f64(&mut self, v: f64) {
        self.write(&v.to_bits().to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Checksum over the exact bits of every state component.
pub fn state_checksum(batch: &StateBatch) -> u64 {
    let mut h = Fnv1a::default();
    for i in 0..batch.len() {
        let s = batch.get(i);
        for v in s.position.iter().chain(s.velocity.iter()).chain(s.angular_velocity.iter()) {
            h.write_f64(*v);
        }
        for v in s.orientation.wxyz() {
            h.write_f64(v);
        }
    }
    h.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub kind: String,
    pub num_envs: usize,
    /// Steps per env inside the timed region.
    pub total_steps: u64,
    pub wall_seconds: f64,
    pub steps_per_second: f64,
    pub sim_to_real_ratio: f64,
    pub frames_per_second: Option<f64>,
    pub frames: Option<u64>,
    /// `[width, height]`
    pub resolution: Option<[u32; 2]>,
    pub dt: f64,
    pub mode: Option<ControlMode>,
    pub workers: usize,
    pub machine: String,
    pub pipeline: String,
    /// Hex FNV-1a of the final state (dynamics) or every image (render).
    pub checksum: String,
}

impl BenchReport {
    fn new(kind: &str, num_envs: usize, steps: u64, wall: f64, dt: f64, workers: usize) -> Self {
        let sps = steps as f64 * num_envs as f64 / wall;
        Self {
            kind: kind.into(),
            num_envs,
            total_steps: steps,
            wall_seconds: wall,
            steps_per_second: sps,
            sim_to_real_ratio: sps * dt,
            frames_per_second: None,
            frames: None,
            resolution: None,
            dt,
            mode: None,
            workers,
            machine: machine_descriptor(),
            pipeline: String::new(),
            checksum: String::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} benchmark: {} envs × {} steps in {:.3} s\n  steps/s:        {:.4e}\n  sim/real ratio: {:.4e}\n",
            self.kind, self.num_envs, self.total_steps, self.wall_seconds, self.steps_per_second, self.sim_to_real_ratio
        );
        if let (Some(fps), Some([w, h])) = (self.frames_per_second, self.resolution) {
            s += &format!("  frames/s:       {fps:.1} at {w}×{h}\n");
        }
        if let Some(mode) = self.mode {
            s += &format!("  command mode:   {mode:?}\n");
        }
        s += &format!(
            "  dt:             {} s\n  pipeline:       {}\n  workers:        {}\n  machine:        {}\n  checksum:       {}\n",
            self.dt, self.pipeline, self.workers, self.machine, self.checksum
        );
        s
    }
}

pub fn machine_descriptor() -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{}-{}, {} logical cores", std::env::consts::OS, std::env::consts::ARCH, cores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsBench {
    pub num_envs: usize,
    pub steps: u32,
    pub mode: ControlMode,
    pub seed: u64,
    /// 0 uses every core.
    pub workers: usize,
    pub warmup: u32,
    pub dt: f64,
}

impl Default for DynamicsBench {
    fn default() -> Self {
        Self {
            num_envs: 1024,
            steps: 1000,
            mode: ControlMode::Velocity,
            seed: 0,
            workers: 0,
            warmup: WARMUP_STEPS,
            dt: 0.01,
        }
    }
}

/// The fixed command every benchmarked robot flies.
pub fn bench_command(mode: ControlMode, hover_thrust: f64) -> Command {
    match mode {
        ControlMode::Attitude => Command::Attitude(AttitudeCommand {
            roll: 0.05,
            pitch: -0.05,
            yaw_rate: 0.2,
            thrust: hover_thrust,
        }),
        ControlMode::Velocity => Command::Velocity(VelocityCommand::new(Vec3::new(1.0, 0.0, 0.2), 0.2)),
    }
}

struct DynamicsRun {
    states: StateBatch,
    wall: f64,
    workers: usize,
}

fn run_dynamics(opts: &DynamicsBench) -> Result<DynamicsRun, BenchError> {
    if opts.num_envs < 1 {
        return Err(BenchError::Invalid("num_envs must be at least 1"));
    }
    let mut cfg = SimConfig::default();
    cfg.env.num_envs = opts.num_envs;
    cfg.env.seed = opts.seed;
    cfg.env.workers = opts.workers;
    cfg.env.wall_enabled = false;
    cfg.env.dt = opts.dt;
    let world = World::create(&cfg)?;
    let params = world.params().clone();
    let controller = *world.controller();
    let mut states = world.robots().clone();
    let commands = vec![bench_command(opts.mode, params.hover_thrust()); opts.num_envs];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| EnvError::WorkerPool(e.to_string()))?;
    let workers = pool.current_num_threads();

    let advance = |states: &mut StateBatch, n: u32| {
        pool.install(|| {
            for _ in 0..n {
                let out = control_batch(states, &commands, &controller, &params).expect("lengths match");
                let wrenches: Vec<_> = out.iter().map(|o| o.wrench).collect();
                step_batch(states, &params, &wrenches, opts.dt).expect("lengths match");
            }
        })
    };
    advance(&mut states, opts.warmup);
    let start = Instant::now();
    advance(&mut states, opts.steps);
    let wall = start.elapsed().as_secs_f64().max(1e-9);
    Ok(DynamicsRun { states, wall, workers })
}

/// Final state checksum of the dynamics benchmark without any timing.
pub fn simulate_dynamics(opts: &DynamicsBench) -> Result<u64, BenchError> {
    Ok(state_checksum(&run_dynamics(opts)?.states))
}

pub fn bench_dynamics(opts: &DynamicsBench) -> Result<BenchReport, BenchError> {
    let run = run_dynamics(opts)?;
    let mut r = BenchReport::new("dynamics", opts.num_envs, opts.steps as u64, run.wall, opts.dt, run.workers);
    r.mode = Some(opts.mode);
    r.pipeline = "controller + saturation + integration, no obstacles, no sensors".into();
    r.checksum = format!("{:016x}", state_checksum(&run.states));
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderBench {
    pub num_envs: usize,
    pub frames: u32,
    pub camera: CameraConfig,
    pub seed: u64,
    pub workers: usize,
    /// Trees per env, drawn from a small generated pool.
    pub trees_per_env: usize,
}

impl Default for RenderBench {
    fn default() -> Self {
        Self {
            num_envs: 64,
            frames: 10,
            camera: CameraConfig {
                enabled: true,
                ..CameraConfig::default()
            },
            seed: 0,
            workers: 0,
            trees_per_env: 8,
        }
    }
}

/// A pool of `count` generated trees of the default shape.
pub fn tree_pool(count: u64) -> Result<AssetPools, AssetError> {
    let trees = (0..count)
        .map(|seed| generate_tree(&TreeSpec { seed, ..TreeSpec::default() }).map(|t| Arc::new(t.prototype)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AssetPools::from([("trees".to_string(), trees)]))
}

/// Tree class placed upright on the floor with random heading.
pub fn forest_class(count: usize) -> AssetClassConfig {
    let mut c = AssetClassConfig::new("trees", count, 2);
    c.position_min = Vec3::new(0.1, 0.1, 0.0);
    c.position_max = Vec3::new(0.9, 0.9, 0.0);
    c.euler_min = Vec3::new(0.0, 0.0, -std::f64::consts::PI);
    c.euler_max = Vec3::new(0.0, 0.0, std::f64::consts::PI);
    c
}

pub fn bench_render(opts: &RenderBench) -> Result<BenchReport, BenchError> {
    if opts.num_envs < 1 || opts.frames < 1 {
        return Err(BenchError::Invalid("num_envs and frames must be at least 1"));
    }
    let mut cfg = SimConfig::default();
    cfg.env.num_envs = opts.num_envs;
    cfg.env.seed = opts.seed;
    cfg.env.workers = opts.workers;
    cfg.camera = CameraConfig {
        enabled: true,
        ..opts.camera.clone()
    };
    let pools = if opts.trees_per_env > 0 {
        cfg.asset_classes.push(forest_class(opts.trees_per_env));
        cfg.env.asset_root = Some(PathBuf::from("<generated>"));
        tree_pool(3)?
    } else {
        AssetPools::new()
    };
    let mut world = World::from_pools(&cfg, pools)?;
    let commands = vec![Command::Velocity(VelocityCommand::new(Vec3::zeros(), 0.5)); opts.num_envs];
    let mut images = DepthBatch::new(0, 0, 0);
    let mut hash = Fnv1a::default();

    let start = Instant::now();
    for _ in 0..opts.frames {
        world.step(&commands)?;
        world.render_into(&mut images)?;
        hash.write(&images.checksum().to_le_bytes());
    }
    let wall = start.elapsed().as_secs_f64().max(1e-9);

    let frames = opts.frames as u64 * opts.num_envs as u64;
    let mut r = BenchReport::new("render", opts.num_envs, opts.frames as u64, wall, cfg.env.dt, world.workers());
    r.frames = Some(frames);
    r.frames_per_second = Some(frames as f64 / wall);
    r.resolution = Some([cfg.camera.width, cfg.camera.height]);
    r.pipeline = format!(
        "one env step plus one depth/segmentation render per frame, {} trees per env",
        opts.trees_per_env
    );
    r.checksum = format!("{:016x}", hash.finish());
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub env: usize,
    pub outcome: String,
    pub steps: u32,
    pub time: f64,
    pub final_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoSummary {
    pub num_envs: usize,
    pub seed: u64,
    pub dt: f64,
    pub goals_reached: usize,
    pub episodes: Vec<EpisodeSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOptions {
    /// Cruise speed of the scripted policy, m/s.
    pub speed: f64,
    /// Write a depth dump of every env each this many steps (camera must be
    /// enabled). `None` writes no dumps.
    pub depth_every: Option<u32>,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            speed: 1.0,
            depth_every: None,
        }
    }
}

/// Velocity command pointing at the goal: the observation's vehicle-frame
/// goal offset scaled to `speed`.
pub fn goal_seeking_command(obs: &crate::env::Observation, speed: f64) -> Command {
    let offset = Vec3::new(obs[13], obs[14], obs[15]);
    let n = offset.norm();
    let v = if n > 0.0 { offset * (speed / n) } else { Vec3::zeros() };
    Command::Velocity(VelocityCommand::new(v, 0.0))
}

/// Flies one episode per env with [`goal_seeking_command`] and writes
/// `trace.csv` and `summary.json` to `out_dir`.
pub fn run_demo(cfg: &SimConfig, out_dir: &Path, opts: &DemoOptions) -> Result<DemoSummary, BenchError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut world = World::create(cfg)?;
    let n = world.num_envs();
    let dt = world.dt();

    let trace_path = out_dir.join("trace.csv");
    let file = std::fs::File::create(&trace_path).map_err(io_err(&trace_path))?;
    let mut trace = std::io::BufWriter::new(file);
    let mut lines = String::from("env,step,t,px,py,pz,vx,vy,vz,e_r,e_omega,goal_distance\n");
    let row = |lines: &mut String, env: usize, step: u32, world: &World, e_r: f64, e_w: f64| {
        let s = world.robot_state(env);
        let d = (world.goal(env) - s.position).norm();
        let (p, v) = (s.position, s.velocity);
        lines.push_str(&format!(
            "{env},{step},{},{},{},{},{},{},{},{e_r},{e_w},{d}\n",
            step as f64 * dt,
            p.x,
            p.y,
            p.z,
            v.x,
            v.y,
            v.z
        ));
    };
    for i in 0..n {
        row(&mut lines, i, 0, &world, 0.0, 0.0);
    }

    let mut done: Vec<Option<EpisodeSummary>> = vec![None; n];
    let mut obs = world.observations();
    let mut step = 0u32;
    while done.iter().any(Option::is_none) {
        if let Some(every) = opts.depth_every.filter(|e| *e > 0) {
            if step.is_multiple_of(every) {
                dump_depth(&world, out_dir, step)?;
            }
        }
        let commands: Vec<Command> = (0..n)
            .map(|i| match done[i] {
                None => goal_seeking_command(&obs[i], opts.speed),
                Some(_) => Command::Velocity(VelocityCommand::default()),
            })
            .collect();
        let results = world.step(&commands)?;
        step += 1;
        for (i, r) in results.iter().enumerate() {
            obs[i] = r.observation;
            if done[i].is_some() {
                continue;
            }
            let e = world.last_control()[i].errors;
            row(&mut lines, i, step, &world, e.e_r.norm(), e.e_omega.norm());
            if r.terminated || r.truncated {
                let outcome = if r.info.goal_reached {
                    "goal_reached"
                } else if r.info.collision {
                    "collision"
                } else if r.info.out_of_bounds {
                    "out_of_bounds"
                } else if r.info.nonfinite {
                    "nonfinite"
                } else {
                    "truncated"
                };
                done[i] = Some(EpisodeSummary {
                    env: i,
                    outcome: outcome.into(),
                    steps: step,
                    time: step as f64 * dt,
                    final_distance: (world.goal(i) - world.robot_state(i).position).norm(),
                });
            }
        }
        if lines.len() > 1 << 20 {
            trace.write_all(lines.as_bytes()).map_err(io_err(&trace_path))?;
            lines.clear();
        }
    }
    trace.write_all(lines.as_bytes()).map_err(io_err(&trace_path))?;
    trace.flush().map_err(io_err(&trace_path))?;

    let episodes: Vec<EpisodeSummary> = done.into_iter().map(|e| e.expect("every env finished")).collect();
    let summary = DemoSummary {
        num_envs: n,
        seed: cfg.env.seed,
        dt,
        goals_reached: episodes.iter().filter(|e| e.outcome == "goal_reached").count(),
        episodes,
    };
    let path = out_dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes")).map_err(io_err(&path))?;
    Ok(summary)
}

fn dump_depth(world: &World, out_dir: &Path, step: u32) -> Result<(), BenchError> {
    let images = world.render()?;
    let path = out_dir.join(format!("depth_{step:05}.bin"));
    let file = std::fs::File::create(&path).map_err(io_err(&path))?;
    images.write_dump(std::io::BufWriter::new(file))?;
    let png = out_dir.join(format!("depth_{step:05}_env0.png"));
    images.save_png(0, world.config().camera.max_range as f32, &png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        let mut h = Fnv1a::default();
        assert_eq!(h.finish(), 0xcbf29ce484222325);
        h.write(b"a");
        assert_eq!(h.finish(), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn dynamics_report_bookkeeping() {
        let opts = DynamicsBench { num_envs: 1, steps: 100, workers: 1, ..DynamicsBench::default() };
        let r = bench_dynamics(&opts).unwrap();
        assert_eq!(r.total_steps * r.num_envs as u64, 100);
        assert!((r.steps_per_second - 100.0 / r.wall_seconds).abs() < 1e-9 * r.steps_per_second);
        assert!((r.sim_to_real_ratio - r.steps_per_second * 0.01).abs() < 1e-9 * r.sim_to_real_ratio);
        assert_eq!(r.checksum, format!("{:016x}", simulate_dynamics(&opts).unwrap()));
    }

    #[test]
    fn render_report_counts_frames() {
        let mut cam = CameraConfig { enabled: true, width: 24, height: 12, ..CameraConfig::default() };
        cam.max_range = 8.0;
        let opts = RenderBench { num_envs: 4, frames: 10, camera: cam, workers: 1, trees_per_env: 2, ..RenderBench::default() };
        let r = bench_render(&opts).unwrap();
        assert_eq!(r.frames, Some(40));
        assert_eq!(r.resolution, Some([24, 12]));
        assert_eq!(bench_render(&opts).unwrap().checksum, r.checksum);
    }

    #[test]
    fn default_render_resolution() {
        assert_eq!(RenderBench::default().camera.width, 480);
        assert_eq!(RenderBench::default().camera.height, 270);
    }

    #[test]
    fn demo_writes_trace_and_summary() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = SimConfig::default();
        cfg.env.num_envs = 2;
        cfg.env.workers = 1;
        let s = run_demo(&cfg, tmp.path(), &DemoOptions::default()).unwrap();
        assert_eq!(s.goals_reached, 2, "{s:?}");
        let trace = std::fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
        assert!(trace.starts_with("env,step,t,"));
        assert!(tmp.path().join("summary.json").exists());
    }
}
