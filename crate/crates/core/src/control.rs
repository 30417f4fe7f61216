//! Geometric tracking controllers on SE(3) for the attitude- and
//! velocity-controlled flight modes.
//!
//! The attitude controller takes roll, pitch, yaw rate and collective
//! thrust and produces a body moment from the rotation error
//! `e_R = ½ (R_dᵀR − RᵀR_d)∨` and the rate error `e_Ω = Ω − RᵀR_dΩ_d`:
//!
//! ```text
//! M = −k_R e_R − k_Ω e_Ω + Ω × JΩ
//! ```
//!
//! The angular-acceleration feed-forward term of the full Lee controller is
//! not included. The velocity controller turns a vehicle-frame velocity
//! setpoint into an attitude command, which then goes through the attitude
//! controller.
//!
//! Thrust acts along body `+b3` in a z-up world, so gravity compensation
//! adds `(0, 0, +g)` to the commanded acceleration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{saturate, RigidState, RobotParams, StateBatch, Wrench};
use crate::se3::{rot_z, rot_zyx, transpose_mul, vee, yaw_of, Rotation, Vec3};

/// Below this norm the commanded acceleration has no usable direction.
pub const DEGENERATE_ACCEL: f64 = 1e-6;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum ControlError {
    #[error("invalid command: {0}")]
    InvalidCommand(&'static str),
    #[error("commanded acceleration norm {norm:e} too small to define a thrust direction")]
    DegenerateAcceleration {
        norm: f64,
        fallback: AttitudeCommand,
    },
    #[error("batch length mismatch: {states} states, {commands} commands")]
    LengthMismatch { states: usize, commands: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttitudeCommand {
    /// Desired roll, rad.
    pub roll: f64,
    /// Desired pitch, rad.
    pub pitch: f64,
    /// Desired yaw rate, rad/s.
    pub yaw_rate: f64,
    /// Collective thrust, N.
    pub thrust: f64,
}

impl AttitudeCommand {
    pub fn new(roll: f64, pitch: f64, yaw_rate: f64, thrust: f64) -> Result<Self, ControlError> {
        let cmd = Self {
            roll,
            pitch,
            yaw_rate,
            thrust,
        };
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn level(thrust: f64) -> Self {
        Self {
            thrust,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        use std::f64::consts::FRAC_PI_2;
        if !(self.roll.abs() < FRAC_PI_2) {
            return Err(ControlError::InvalidCommand("|roll| must be below π/2"));
        }
        if !(self.pitch.abs() < FRAC_PI_2) {
            return Err(ControlError::InvalidCommand("|pitch| must be below π/2"));
        }
        if !self.yaw_rate.is_finite() || !self.thrust.is_finite() {
            return Err(ControlError::InvalidCommand("non-finite yaw rate or thrust"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    /// Desired velocity in the vehicle frame, m/s.
    pub velocity: Vec3,
    /// Desired yaw rate, rad/s.
    pub yaw_rate: f64,
}

impl VelocityCommand {
    pub fn new(velocity: Vec3, yaw_rate: f64) -> Self {
        Self { velocity, yaw_rate }
    }
}

/// High-level command for one robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Command {
    Attitude(AttitudeCommand),
    Velocity(VelocityCommand),
}

/// Diagonal controller gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    pub k_r: Vec3,
    pub k_omega: Vec3,
    pub k_v: Vec3,
}

impl Default for ControlGains {
    /// Tuned for the default 1 kg, J = diag(0.01, 0.01, 0.02) robot.
    fn default() -> Self {
        Self {
            k_r: Vec3::new(8.0, 8.0, 2.0),
            k_omega: Vec3::new(1.2, 1.2, 0.6),
            k_v: Vec3::new(3.0, 3.0, 3.0),
        }
    }
}

impl ControlGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        let all = self.k_r.iter().chain(self.k_omega.iter()).chain(self.k_v.iter());
        if all.clone().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(ControlError::InvalidCommand("gains must be strictly positive"));
        }
        Ok(())
    }
}

/// Gains plus the command limits applied by the velocity controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub gains: ControlGains,
    /// Clamp on commanded roll and pitch, rad.
    pub tilt_max: f64,
    /// Clamp on the norm of velocity setpoints, m/s.
    pub v_cmd_max: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: ControlGains::default(),
            tilt_max: 0.6,
            v_cmd_max: 5.0,
        }
    }
}

/// Attitude and angular-velocity tracking errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlErrors {
    pub e_r: Vec3,
    pub e_omega: Vec3,
}

/// Desired rotation and body rate for an attitude command at current yaw
/// `yaw`. The rate maps the yaw-rate command through the Euler-rate to
/// body-rate matrix of the commanded roll and pitch.
pub fn desired_attitude(yaw: f64, cmd: &AttitudeCommand) -> (Rotation, Vec3) {
    let r_d = rot_zyx(cmd.roll, cmd.pitch, yaw);
    let (sr, cr) = cmd.roll.sin_cos();
    let (sp, cp) = cmd.pitch.sin_cos();
    let omega_d = Vec3::new(-sp, sr * cp, cr * cp) * cmd.yaw_rate;
    (r_d, omega_d)
}

pub fn attitude_errors(r: &Rotation, omega: &Vec3, r_d: &Rotation, omega_d: &Vec3) -> ControlErrors {
    let rm = r.matrix();
    let rdm = r_d.matrix();
    let rd_t_r = transpose_mul(&rdm, &rm);
    let r_t_rd = transpose_mul(&rm, &rdm);
    // r_t_rd is bitwise the transpose of rd_t_r, so the difference is exactly skew
    let e_r = vee(&(rd_t_r - r_t_rd)).expect("difference of a matrix and its transpose") * 0.5;
    let e_omega = omega - r_t_rd * omega_d;
    ControlErrors { e_r, e_omega }
}

/// Attitude-mode controller. Returns the saturated wrench and the tracking
/// errors it was computed from.
pub fn attitude_control(
    state: &RigidState,
    cmd: &AttitudeCommand,
    gains: &ControlGains,
    params: &RobotParams,
) -> Result<(Wrench, ControlErrors), ControlError> {
    cmd.validate()?;
    let yaw = yaw_of(&state.orientation);
    let (r_d, omega_d) = desired_attitude(yaw, cmd);
    let omega = state.angular_velocity;
    let errors = attitude_errors(&state.orientation, &omega, &r_d, &omega_d);
    let moment = -gains.k_r.component_mul(&errors.e_r) - gains.k_omega.component_mul(&errors.e_omega)
        + omega.cross(&(params.inertia() * omega));
    let wrench = saturate(&Wrench::new(cmd.thrust, moment), params);
    Ok((wrench, errors))
}

/// Velocity-mode controller: converts a vehicle-frame velocity setpoint
/// into roll, pitch, yaw rate and thrust.
///
/// On [`ControlError::DegenerateAcceleration`] the error carries a level,
/// hover-thrust fallback command.
pub fn velocity_control(
    state: &RigidState,
    cmd: &VelocityCommand,
    config: &ControllerConfig,
    params: &RobotParams,
) -> Result<AttitudeCommand, ControlError> {
    if !cmd.velocity.iter().all(|v| v.is_finite()) || !cmd.yaw_rate.is_finite() {
        return Err(ControlError::InvalidCommand("non-finite velocity command"));
    }
    let mut v_d = cmd.velocity;
    let speed = v_d.norm();
    if speed > config.v_cmd_max {
        v_d *= config.v_cmd_max / speed;
    }

    let yaw = yaw_of(&state.orientation);
    let world_to_vehicle = rot_z(yaw).transpose();
    let v = world_to_vehicle * state.velocity;
    let a_d = config.gains.k_v.component_mul(&(v_d - v));
    let a_tot = a_d + Vec3::new(0.0, 0.0, params.gravity);
    let norm = a_tot.norm();
    if !(norm >= DEGENERATE_ACCEL) {
        return Err(ControlError::DegenerateAcceleration {
            norm,
            fallback: AttitudeCommand {
                yaw_rate: cmd.yaw_rate,
                ..AttitudeCommand::level(params.hover_thrust())
            },
        });
    }
    let b3_vehicle = world_to_vehicle * state.orientation.matrix().column(2);
    let thrust = params.mass() * a_tot.dot(&b3_vehicle);
    let roll = (-a_tot.y).atan2((a_tot.x * a_tot.x + a_tot.z * a_tot.z).sqrt());
    let pitch = a_tot.x.atan2(a_tot.z);
    Ok(AttitudeCommand {
        roll: roll.clamp(-config.tilt_max, config.tilt_max),
        pitch: pitch.clamp(-config.tilt_max, config.tilt_max),
        yaw_rate: cmd.yaw_rate,
        thrust,
    })
}

/// Per-robot status reported by [`control_batch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlFlag {
    #[default]
    Nominal,
    /// The velocity controller fell back to a level hover command.
    DegenerateAcceleration,
    /// The command was rejected; a level hover command was used instead.
    InvalidCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlOutput {
    pub wrench: Wrench,
    pub errors: ControlErrors,
    pub flag: ControlFlag,
}

/// Runs the controller matching `cmd` for a single robot.
pub fn control_one(
    state: &RigidState,
    cmd: &Command,
    config: &ControllerConfig,
    params: &RobotParams,
) -> ControlOutput {
    let hover = AttitudeCommand::level(params.hover_thrust());
    let (att, mut flag) = match cmd {
        Command::Attitude(a) => (*a, ControlFlag::Nominal),
        Command::Velocity(v) => match velocity_control(state, v, config, params) {
            Ok(a) => (a, ControlFlag::Nominal),
            Err(ControlError::DegenerateAcceleration { fallback, .. }) => {
                (fallback, ControlFlag::DegenerateAcceleration)
            }
            Err(_) => (hover, ControlFlag::InvalidCommand),
        },
    };
    let (wrench, errors) = match attitude_control(state, &att, &config.gains, params) {
        Ok(out) => out,
        Err(_) => {
            flag = ControlFlag::InvalidCommand;
            attitude_control(state, &hover, &config.gains, params).expect("hover command is valid")
        }
    };
    ControlOutput {
        wrench,
        errors,
        flag,
    }
}

/// Batched controller, elementwise identical to [`control_one`].
pub fn control_batch(
    states: &StateBatch,
    commands: &[Command],
    config: &ControllerConfig,
    params: &RobotParams,
) -> Result<Vec<ControlOutput>, ControlError> {
    if states.len() != commands.len() {
        return Err(ControlError::LengthMismatch {
            states: states.len(),
            commands: commands.len(),
        });
    }
    Ok(commands
        .par_iter()
        .enumerate()
        .with_min_len(64)
        .map(|(i, cmd)| control_one(&states.get(i), cmd, config, params))
        .collect())
}
