//! The batched environment: one robot per env, obstacles, collisions,
//! goal-reaching reward and auto-reset.
//!
//! Each env is an axis-aligned box with its corner at the env-local origin.
//! Positions, goals and obstacle poses are all env-local.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::assets::{
    load_asset_dir, randomize_pose, sample_env_assets, AssetError, AssetInstance, AssetPools, AssetPrototype,
};
use crate::config::{CameraConfig, ConfigError, RewardConfig, SimConfig};
use crate::control::{control_batch, Command, ControlFlag, ControlOutput, ControllerConfig};
use crate::dynamics::{step_batch, RigidState, RobotParams, StateBatch, StepFlag};
use crate::geometry::{EnvScene, Pose, Primitive, Shape};
use crate::rng::{env_stream, uniform, Purpose};
use crate::se3::{rot_z, rot_zyx, yaw_of, Rotation, Vec3};
use crate::sensor::{randomize_mount, render_into, DepthBatch};

/// Observation length per robot: position (3), orientation quaternion
/// w, x, y, z (4), world-frame velocity (3), body rates (3) and the goal
/// offset in the yaw-only vehicle frame (3).
pub const OBS_DIM: usize = 16;

/// Rejection-sampling budget for robot and goal placement.
pub const PLACEMENT_ATTEMPTS: usize = 100;

pub const WALL_CLASS: &str = "walls";

pub type Observation = [f64; OBS_DIM];

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error("env {env}: no collision-free {what} found after {attempts} attempts")]
    PlacementFailure {
        env: usize,
        what: &'static str,
        attempts: usize,
    },
    #[error("expected {expected} commands, got {got}")]
    CommandCount { expected: usize, got: usize },
    #[error("camera is disabled in the config")]
    CameraDisabled,
    #[error("cannot build worker pool: {0}")]
    WorkerPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepInfo {
    pub collision: bool,
    pub out_of_bounds: bool,
    pub nonfinite: bool,
    pub goal_reached: bool,
    /// The env was reset on this step; the command was ignored.
    pub reset: bool,
    /// A reset was due but no collision-free placement was found.
    pub placement_failed: bool,
    /// The integrator hit a hard velocity or rate limit.
    pub clamped: bool,
    pub control: ControlFlag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// Obstacle snapshot exposed to learning code.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleInfo {
    pub pose: Pose,
    pub class: String,
    pub segmentation_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CollisionFlags {
    /// Robot sphere overlaps a collision-enabled primitive.
    pub obstacle: bool,
    /// Robot sphere reaches past the env bounds.
    pub bounds: bool,
}

impl CollisionFlags {
    pub fn any(&self) -> bool {
        self.obstacle || self.bounds
    }
}

/// Sphere-versus-scene test for one robot.
pub fn check_collision(p: &Vec3, r_coll: f64, scene: &EnvScene, bounds: &Vec3) -> CollisionFlags {
    let bounds_hit = (0..3).any(|i| !(p[i] >= r_coll && p[i] <= bounds[i] - r_coll));
    let obstacle = scene.primitives.iter().any(|pp| pp.primitive.distance(p) < r_coll);
    CollisionFlags {
        obstacle,
        bounds: bounds_hit,
    }
}

/// Batched [`check_collision`]; `scenes[i]` belongs to `positions[i]`.
pub fn check_collisions(positions: &[Vec3], r_coll: f64, scenes: &[EnvScene], bounds: &Vec3) -> Vec<CollisionFlags> {
    positions
        .par_iter()
        .zip(scenes.par_iter())
        .map(|(p, s)| check_collision(p, r_coll, s, bounds))
        .collect()
}

pub fn reward_goal_reaching(p: &Vec3, v: &Vec3, goal: &Vec3, collided: bool, cfg: &RewardConfig) -> f64 {
    let dist = (goal - p).norm();
    let mut r = -dist * cfg.c_dist - v.norm() * cfg.c_vel - cfg.c_step;
    if dist < cfg.success_radius {
        r += cfg.c_success;
    }
    if collided {
        r -= cfg.c_crash;
    }
    r
}

/// Observation vector for one robot.
pub fn observe(s: &RigidState, goal: &Vec3) -> Observation {
    let q = s.orientation.wxyz();
    let rel = rot_z(yaw_of(&s.orientation)).transpose() * (goal - s.position);
    let mut o = [0.0; OBS_DIM];
    o[0..3].copy_from_slice(s.position.as_slice());
    o[3..7].copy_from_slice(&q);
    o[7..10].copy_from_slice(s.velocity.as_slice());
    o[10..13].copy_from_slice(s.angular_velocity.as_slice());
    o[13..16].copy_from_slice(rel.as_slice());
    o
}

/// Six boxes lining the outside of the env box.
fn wall_instances(bounds: &Vec3, thickness: f64, segmentation_id: u32, env_index: usize) -> Vec<AssetInstance> {
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        for side in [0.0, 1.0] {
            let mut size = bounds + Vec3::repeat(2.0 * thickness);
            size[axis] = thickness;
            let mut center = bounds * 0.5;
            center[axis] = if side == 0.0 {
                -0.5 * thickness
            } else {
                bounds[axis] + 0.5 * thickness
            };
            let proto = AssetPrototype {
                source: format!("wall_{axis}_{side}"),
                class: WALL_CLASS.into(),
                primitives: vec![Primitive {
                    shape: Shape::Box { size },
                    pose: Pose::default(),
                }],
            };
            out.push(AssetInstance {
                prototype: Arc::new(proto),
                pose: Pose::from_translation(center),
                segmentation_id,
                collision_enabled: true,
                env_index,
            });
        }
    }
    out
}

fn build_scene(instances: &[AssetInstance]) -> EnvScene {
    EnvScene::new(
        instances
            .iter()
            .filter(|i| i.collision_enabled)
            .flat_map(|i| i.placed_primitives())
            .collect(),
    )
}

/// Per-env bookkeeping besides the robot state.
#[derive(Debug, Clone)]
struct Slot {
    instances: Vec<AssetInstance>,
    /// Indices into `instances` of configured (non-wall) assets, paired
    /// with their class config index.
    randomized: Vec<(usize, usize)>,
    goal: Vec3,
    mount: Pose,
    steps: u32,
    reset_counter: u64,
    needs_reset: bool,
}

pub struct World {
    cfg: SimConfig,
    params: RobotParams,
    controller: ControllerConfig,
    pool: rayon::ThreadPool,
    robots: StateBatch,
    slots: Vec<Slot>,
    scenes: Vec<EnvScene>,
    last_control: Vec<ControlOutput>,
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World")
            .field("num_envs", &self.slots.len())
            .field("workers", &self.pool.current_num_threads())
            .finish_non_exhaustive()
    }
}

struct Placement {
    instances: Vec<AssetInstance>,
    scene: EnvScene,
    robot: RigidState,
    goal: Vec3,
    mount: Pose,
}

impl World {
    /// Builds a world, loading asset pools from `env.asset_root` when asset
    /// classes are configured.
    pub fn create(cfg: &SimConfig) -> Result<Self, EnvError> {
        let pools = match (&cfg.env.asset_root, cfg.asset_classes.is_empty()) {
            (Some(root), false) => load_asset_dir(root)?,
            _ => AssetPools::new(),
        };
        Self::from_pools(cfg, pools)
    }

    /// Builds a world from the config file at `path`.
    pub fn from_config_path(path: &Path) -> Result<Self, EnvError> {
        Self::create(&SimConfig::from_path(path)?)
    }

    /// Builds a world around already loaded (or generated) pools.
    pub fn from_pools(cfg: &SimConfig, pools: AssetPools) -> Result<Self, EnvError> {
        cfg.validate()?;
        let params = cfg.robot.params()?;
        let controller = cfg.gains.controller()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.env.workers)
            .build()
            .map_err(|e| EnvError::WorkerPool(e.to_string()))?;
        let n = cfg.env.num_envs;

        let picks: Vec<Vec<AssetInstance>> = (0..n)
            .map(|i| {
                let mut rng = env_stream(cfg.env.seed, i, 0, Purpose::AssetPicks);
                sample_env_assets(&pools, &cfg.asset_classes, i, &mut rng)
            })
            .collect::<Result<_, _>>()?;

        let mut world = World {
            cfg: cfg.clone(),
            params,
            controller,
            pool,
            robots: StateBatch::default(),
            slots: Vec::with_capacity(n),
            scenes: Vec::with_capacity(n),
            last_control: vec![ControlOutput::default(); n],
        };
        let placements: Vec<Placement> = world.pool.install(|| {
            picks
                .into_par_iter()
                .enumerate()
                .map(|(i, picked)| world.place(i, 0, picked))
                .collect::<Result<_, _>>()
        })?;
        for p in placements {
            let randomized = world.randomized_indices(&p.instances);
            world.robots.push(p.robot);
            world.scenes.push(p.scene);
            world.slots.push(Slot {
                instances: p.instances,
                randomized,
                goal: p.goal,
                mount: p.mount,
                steps: 0,
                reset_counter: 0,
                needs_reset: false,
            });
        }
        Ok(world)
    }

    fn randomized_indices(&self, instances: &[AssetInstance]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut k = 0;
        for (c, class) in self.cfg.asset_classes.iter().enumerate() {
            for _ in 0..class.count_per_env {
                out.push((k, c));
                k += 1;
            }
        }
        debug_assert!(k <= instances.len());
        out
    }

    /// Lays out obstacles, robot, goal and camera mount for env `i` at
    /// `reset_counter`. `picked` are the env's configured asset instances
    /// in class order, without walls.
    fn place(&self, i: usize, reset_counter: u64, picked: Vec<AssetInstance>) -> Result<Placement, EnvError> {
        let env = &self.cfg.env;
        let seed = env.seed;
        let mut rng = env_stream(seed, i, reset_counter, Purpose::AssetPoses);
        let mut instances: Vec<AssetInstance> = Vec::with_capacity(picked.len() + 6);
        let mut k = 0;
        for class in &self.cfg.asset_classes {
            for _ in 0..class.count_per_env {
                instances.push(randomize_pose(&picked[k], class, &env.bounds, &mut rng));
                k += 1;
            }
        }
        if env.wall_enabled {
            instances.extend(wall_instances(&env.bounds, env.wall_thickness, env.wall_segmentation_id, i));
        }
        let scene = build_scene(&instances);
        let r = self.params.collision_radius;
        let free = |p: &Vec3| !check_collision(p, r, &scene, &env.bounds).any();
        let sample = |rng: &mut rand_chacha::ChaCha8Rng, lo: &Vec3, hi: &Vec3| {
            Vec3::from_fn(|k, _| uniform(rng, lo[k], hi[k]) * env.bounds[k])
        };

        let mut rng = env_stream(seed, i, reset_counter, Purpose::RobotSpawn);
        let mut robot = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let p = sample(&mut rng, &env.spawn_min, &env.spawn_max);
            let yaw = uniform(&mut rng, -std::f64::consts::PI, std::f64::consts::PI);
            if free(&p) {
                robot = Some(RigidState::at_rest(p, rot_zyx(0.0, 0.0, yaw)));
                break;
            }
        }
        let robot = robot.ok_or(EnvError::PlacementFailure {
            env: i,
            what: "robot start",
            attempts: PLACEMENT_ATTEMPTS,
        })?;

        let mut rng = env_stream(seed, i, reset_counter, Purpose::Goal);
        let mut goal = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let g = sample(&mut rng, &env.goal_min, &env.goal_max);
            if free(&g) && (g - robot.position).norm() >= self.cfg.reward.success_radius {
                goal = Some(g);
                break;
            }
        }
        let goal = goal.ok_or(EnvError::PlacementFailure {
            env: i,
            what: "goal",
            attempts: PLACEMENT_ATTEMPTS,
        })?;

        let mut rng = env_stream(seed, i, reset_counter, Purpose::CameraMount);
        let mount = randomize_mount(&self.cfg.camera, &mut rng);
        Ok(Placement {
            instances,
            scene,
            robot,
            goal,
            mount,
        })
    }

    fn apply_reset(&mut self, i: usize, counter: u64, p: Placement) {
        self.robots.set(i, p.robot);
        self.scenes[i] = p.scene;
        let slot = &mut self.slots[i];
        slot.instances = p.instances;
        slot.goal = p.goal;
        slot.mount = p.mount;
        slot.steps = 0;
        slot.reset_counter = counter;
        slot.needs_reset = false;
    }

    fn picked(&self, i: usize) -> Vec<AssetInstance> {
        let slot = &self.slots[i];
        slot.randomized.iter().map(|(k, _)| slot.instances[*k].clone()).collect()
    }

    /// Resets env `i` with fresh obstacle poses, robot start and goal. The
    /// asset picks made at creation are kept.
    pub fn reset_env(&mut self, i: usize) -> Result<Observation, EnvError> {
        let counter = self.slots[i].reset_counter + 1;
        let placement = self.place(i, counter, self.picked(i));
        match placement {
            Ok(p) => {
                self.apply_reset(i, counter, p);
                Ok(self.observation(i))
            }
            Err(e) => {
                self.slots[i].reset_counter = counter;
                self.slots[i].needs_reset = true;
                Err(e)
            }
        }
    }

    /// Resets every env.
    pub fn reset_all(&mut self) -> Result<Vec<Observation>, EnvError> {
        let all: Vec<usize> = (0..self.num_envs()).collect();
        self.reset_many(&all)
            .into_iter()
            .zip(all)
            .map(|(r, i)| r.map(|_| self.observation(i)))
            .collect()
    }

    fn reset_many(&mut self, envs: &[usize]) -> Vec<Result<(), EnvError>> {
        let jobs: Vec<(usize, u64, Vec<AssetInstance>)> = envs
            .iter()
            .map(|&i| (i, self.slots[i].reset_counter + 1, self.picked(i)))
            .collect();
        let placed: Vec<Result<Placement, EnvError>> = self.pool.install(|| {
            jobs.par_iter()
                .map(|(i, c, picked)| self.place(*i, *c, picked.clone()))
                .collect()
        });
        jobs.iter()
            .zip(placed)
            .map(|((i, c, _), p)| match p {
                Ok(p) => {
                    self.apply_reset(*i, *c, p);
                    Ok(())
                }
                Err(e) => {
                    self.slots[*i].reset_counter = *c;
                    self.slots[*i].needs_reset = true;
                    Err(e)
                }
            })
            .collect()
    }

    /// Advances every env by one control period. Envs that terminated or
    /// truncated on the previous call are reset instead and report their
    /// fresh observation with `info.reset` set.
    pub fn step(&mut self, commands: &[Command]) -> Result<Vec<StepResult>, EnvError> {
        let n = self.num_envs();
        if commands.len() != n {
            return Err(EnvError::CommandCount {
                expected: n,
                got: commands.len(),
            });
        }
        let due: Vec<usize> = (0..n).filter(|&i| self.slots[i].needs_reset).collect();
        let reset_status = self.reset_many(&due);
        let mut resetting = vec![None; n];
        for (i, status) in due.iter().zip(reset_status) {
            resetting[*i] = Some(status.is_ok());
        }
        let saved: Vec<(usize, RigidState)> = due.iter().map(|&i| (i, self.robots.get(i))).collect();

        let dt = self.cfg.env.dt;
        let (controls, flags, collisions) = self.pool.install(|| {
            let controls = control_batch(&self.robots, commands, &self.controller, &self.params)
                .expect("command count checked");
            let wrenches: Vec<_> = controls.iter().map(|c| c.wrench).collect();
            let flags = step_batch(&mut self.robots, &self.params, &wrenches, dt).expect("valid dt and lengths");
            let collisions = check_collisions(
                &self.robots.positions,
                self.params.collision_radius,
                &self.scenes,
                &self.cfg.env.bounds,
            );
            (controls, flags, collisions)
        });
        for (i, s) in saved {
            self.robots.set(i, s);
        }
        self.last_control = controls;

        let reward_cfg = &self.cfg.reward;
        let max_steps = self.cfg.env.episode_max_steps;
        let mut results = Vec::with_capacity(n);
        for i in 0..n {
            let state = self.robots.get(i);
            let slot = &mut self.slots[i];
            let observation = observe(&state, &slot.goal);
            if let Some(ok) = resetting[i] {
                let info = StepInfo {
                    reset: ok,
                    placement_failed: !ok,
                    ..StepInfo::default()
                };
                results.push(StepResult {
                    observation,
                    reward: 0.0,
                    terminated: !ok,
                    truncated: false,
                    info,
                });
                continue;
            }
            slot.steps += 1;
            let nonfinite = flags[i] == StepFlag::NonFinite;
            let col = collisions[i];
            let goal_reached = (slot.goal - state.position).norm() < reward_cfg.success_radius;
            let reward = reward_goal_reaching(&state.position, &state.velocity, &slot.goal, col.any(), reward_cfg);
            let terminated = col.any() || nonfinite || goal_reached;
            let truncated = !terminated && slot.steps >= max_steps;
            slot.needs_reset = terminated || truncated;
            results.push(StepResult {
                observation,
                reward,
                terminated,
                truncated,
                info: StepInfo {
                    collision: col.obstacle,
                    out_of_bounds: col.bounds,
                    nonfinite,
                    goal_reached,
                    reset: false,
                    placement_failed: false,
                    clamped: flags[i] == StepFlag::Clamped,
                    control: self.last_control[i].flag,
                },
            });
        }
        Ok(results)
    }

    pub fn num_envs(&self) -> usize {
        self.slots.len()
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn params(&self) -> &RobotParams {
        &self.params
    }

    pub fn controller(&self) -> &ControllerConfig {
        &self.controller
    }

    pub fn dt(&self) -> f64 {
        self.cfg.env.dt
    }

    pub fn bounds(&self) -> Vec3 {
        self.cfg.env.bounds
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn observation(&self, i: usize) -> Observation {
        observe(&self.robots.get(i), &self.slots[i].goal)
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.num_envs()).map(|i| self.observation(i)).collect()
    }

    pub fn robots(&self) -> &StateBatch {
        &self.robots
    }

    pub fn robot_state(&self, i: usize) -> RigidState {
        self.robots.get(i)
    }

    pub fn set_robot_state(&mut self, i: usize, s: RigidState) {
        self.robots.set(i, s);
    }

    pub fn goal(&self, i: usize) -> Vec3 {
        self.slots[i].goal
    }

    pub fn set_goal(&mut self, i: usize, goal: Vec3) {
        self.slots[i].goal = goal;
    }

    pub fn scene(&self, i: usize) -> &EnvScene {
        &self.scenes[i]
    }

    pub fn instances(&self, i: usize) -> &[AssetInstance] {
        &self.slots[i].instances
    }

    pub fn reset_counter(&self, i: usize) -> u64 {
        self.slots[i].reset_counter
    }

    pub fn episode_steps(&self, i: usize) -> u32 {
        self.slots[i].steps
    }

    /// Controller outputs from the most recent [`World::step`].
    pub fn last_control(&self) -> &[ControlOutput] {
        &self.last_control
    }

    /// Camera mount of env `i` in the body frame.
    pub fn camera_mount(&self, i: usize) -> Pose {
        self.slots[i].mount
    }

    /// Obstacle poses per env, walls included.
    pub fn privileged_info(&self) -> Vec<Vec<ObstacleInfo>> {
        self.slots
            .iter()
            .map(|s| {
                s.instances
                    .iter()
                    .map(|inst| ObstacleInfo {
                        pose: inst.pose,
                        class: inst.class().to_string(),
                        segmentation_id: inst.segmentation_id,
                    })
                    .collect()
            })
            .collect()
    }

    /// World poses of every camera: robot pose composed with its mount.
    pub fn camera_poses(&self) -> Vec<Pose> {
        (0..self.num_envs())
            .map(|i| {
                let s = self.robots.get(i);
                Pose::new(s.position, s.orientation).compose(&self.slots[i].mount)
            })
            .collect()
    }

    /// Renders every robot's camera. Fails when the camera is disabled.
    pub fn render(&self) -> Result<DepthBatch, EnvError> {
        let cam = &self.cfg.camera;
        let mut out = DepthBatch::new(self.num_envs(), cam.height as usize, cam.width as usize);
        self.render_into(&mut out)?;
        Ok(out)
    }

    /// Like [`World::render`], reusing `out`'s buffers.
    pub fn render_into(&self, out: &mut DepthBatch) -> Result<(), EnvError> {
        if !self.cfg.camera.enabled {
            return Err(EnvError::CameraDisabled);
        }
        self.render_with(&self.cfg.camera, out);
        Ok(())
    }

    /// Renders with an explicit camera model, using the world's mounts.
    pub fn render_with(&self, cam: &CameraConfig, out: &mut DepthBatch) {
        let poses = self.camera_poses();
        let scenes: Vec<&EnvScene> = self.scenes.iter().collect();
        self.pool.install(|| render_into(&poses, &scenes, cam, out));
    }
}

/// Identity orientation at rest, used by tests and benchmarks.
pub fn level_state(position: Vec3) -> RigidState {
    RigidState::at_rest(position, Rotation::identity())
}
