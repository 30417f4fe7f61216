//! Flat-array exchange format for language bindings.
//!
//! Observations are `f64`, row-major `[num_envs, OBS_DIM]`, with the field
//! order given by [`OBS_FIELDS`]. Actions are `f64`, row-major
//! `[num_envs, ACTION_DIM]`, normalized to `[-1, 1]`:
//!
//! | mode     | a0        | a1        | a2        | a3        |
//! |----------|-----------|-----------|-----------|-----------|
//! | attitude | roll      | pitch     | yaw rate  | thrust    |
//! | velocity | v_x       | v_y       | v_z       | yaw rate  |
//!
//! Values are clipped to `[-1, 1]` and scaled by the config's
//! `env.actions` ranges. Thrust maps `-1..1` onto `thrust_min..thrust_max`.
//! Velocity components are in the yaw-only vehicle frame, like the goal
//! offset in the observation. A NaN action falls through to the
//! controller, which rejects it and hovers (flagged in `info`).

use serde::Serialize;
use thiserror::Error;

use crate::config::{ActionRanges, ControlMode, SCHEMA_VERSION};
use crate::control::{AttitudeCommand, Command, ControlFlag, VelocityCommand};
use crate::env::{EnvError, StepResult, World, OBS_DIM};
use crate::se3::Vec3;

pub const ACTION_DIM: usize = 4;

/// Observation fields in order, with their widths.
pub const OBS_FIELDS: [(&str, usize); 5] = [
    ("position", 3),
    ("orientation_wxyz", 4),
    ("velocity_world", 3),
    ("angular_velocity_body", 3),
    ("goal_offset_vehicle", 3),
];

/// Bits of the per-env `info` word.
pub mod info_bits {
    pub const COLLISION: u32 = 1 << 0;
    pub const OUT_OF_BOUNDS: u32 = 1 << 1;
    pub const NONFINITE: u32 = 1 << 2;
    pub const GOAL_REACHED: u32 = 1 << 3;
    pub const RESET: u32 = 1 << 4;
    pub const PLACEMENT_FAILED: u32 = 1 << 5;
    pub const CLAMPED: u32 = 1 << 6;
    pub const DEGENERATE_ACCELERATION: u32 = 1 << 7;
    pub const INVALID_COMMAND: u32 = 1 << 8;
}

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error("action array has {got} values, expected {expected} ({num_envs} envs × {ACTION_DIM})")]
    ShapeMismatch {
        expected: usize,
        got: usize,
        num_envs: usize,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Shapes and bounds a binding needs to declare its spaces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layout {
    pub schema_version: u32,
    pub num_envs: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_low: f64,
    pub action_high: f64,
    pub control_mode: ControlMode,
    pub obs_fields: Vec<(String, usize)>,
}

impl Layout {
    pub fn of(world: &World) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            num_envs: world.num_envs(),
            obs_dim: OBS_DIM,
            action_dim: ACTION_DIM,
            action_low: -1.0,
            action_high: 1.0,
            control_mode: world.config().env.control_mode,
            obs_fields: OBS_FIELDS.iter().map(|(n, w)| (n.to_string(), *w)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }
}

/// Maps one normalized action to a controller command.
pub fn denormalize(action: &[f64; ACTION_DIM], mode: ControlMode, ranges: &ActionRanges) -> Command {
    let a = action.map(|v| v.clamp(-1.0, 1.0));
    match mode {
        ControlMode::Attitude => Command::Attitude(AttitudeCommand {
            roll: a[0] * ranges.roll,
            pitch: a[1] * ranges.pitch,
            yaw_rate: a[2] * ranges.yaw_rate,
            thrust: ranges.thrust_min + 0.5 * (a[3] + 1.0) * (ranges.thrust_max - ranges.thrust_min),
        }),
        ControlMode::Velocity => Command::Velocity(VelocityCommand::new(
            Vec3::new(a[0], a[1], a[2]) * ranges.speed,
            a[3] * ranges.yaw_rate,
        )),
    }
}

/// Flat step output; every array is indexed by env.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlatStep {
    /// `[num_envs * OBS_DIM]`
    pub observations: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    /// [`info_bits`] per env.
    pub info: Vec<u32>,
}

impl FlatStep {
    pub fn from_results(results: &[StepResult]) -> Self {
        let mut out = FlatStep {
            observations: Vec::with_capacity(results.len() * OBS_DIM),
            ..FlatStep::default()
        };
        for r in results {
            out.observations.extend_from_slice(&r.observation);
            out.rewards.push(r.reward);
            out.terminated.push(r.terminated);
            out.truncated.push(r.truncated);
            out.info.push(info_word(r));
        }
        out
    }
}

pub fn info_word(r: &StepResult) -> u32 {
    use info_bits::*;
    let i = &r.info;
    let mut w = 0;
    for (set, bit) in [
        (i.collision, COLLISION),
        (i.out_of_bounds, OUT_OF_BOUNDS),
        (i.nonfinite, NONFINITE),
        (i.goal_reached, GOAL_REACHED),
        (i.reset, RESET),
        (i.placement_failed, PLACEMENT_FAILED),
        (i.clamped, CLAMPED),
        (i.control == ControlFlag::DegenerateAcceleration, DEGENERATE_ACCELERATION),
        (i.control == ControlFlag::InvalidCommand, INVALID_COMMAND),
    ] {
        if set {
            w |= bit;
        }
    }
    w
}

/// Converts a flat action array into commands for `world`'s control mode.
pub fn commands_from_flat(world: &World, actions: &[f64]) -> Result<Vec<Command>, ExchangeError> {
    let n = world.num_envs();
    if actions.len() != n * ACTION_DIM {
        return Err(ExchangeError::ShapeMismatch {
            expected: n * ACTION_DIM,
            got: actions.len(),
            num_envs: n,
        });
    }
    let env = &world.config().env;
    Ok(actions
        .chunks_exact(ACTION_DIM)
        .map(|a| denormalize(&[a[0], a[1], a[2], a[3]], env.control_mode, &env.actions))
        .collect())
}

pub fn step_flat(world: &mut World, actions: &[f64]) -> Result<FlatStep, ExchangeError> {
    let commands = commands_from_flat(world, actions)?;
    Ok(FlatStep::from_results(&world.step(&commands)?))
}

/// Current observations, flattened.
pub fn observations_flat(world: &World) -> Vec<f64> {
    world.observations().concat()
}

/// Resets every env and returns the flat observations.
pub fn reset_flat(world: &mut World) -> Result<Vec<f64>, ExchangeError> {
    Ok(world.reset_all()?.concat())
}
