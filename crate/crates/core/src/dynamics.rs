//! Single-rigid-body multirotor dynamics.
//!
//! Each robot is one rigid body driven by a collective thrust along its body
//! `+b3` axis and a body-frame moment. The world is z-up with gravity
//! `(0, 0, -g)`. States are integrated with semi-implicit Euler: velocities
//! are updated first and the new velocities drive position and attitude.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::{exp_so3, Mat3, Rotation, Vec3};

pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const DEFAULT_V_HARD_LIMIT: f64 = 50.0;
pub const DEFAULT_OMEGA_HARD_LIMIT: f64 = 100.0;
pub const MAX_DT: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid robot parameters: {0}")]
    InvalidParams(String),
    #[error("time step {0} s outside (0, {MAX_DT}]")]
    InvalidTimeStep(f64),
    #[error("integration produced a non-finite state")]
    NonFiniteState,
    #[error("batch length mismatch: {states} states, {wrenches} wrenches")]
    LengthMismatch { states: usize, wrenches: usize },
}

/// Kinematic state of one robot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidState {
    /// Inertial position, m.
    pub position: Vec3,
    /// Body to inertial rotation.
    pub orientation: Rotation,
    /// Inertial linear velocity, m/s.
    pub velocity: Vec3,
    /// Body-frame angular velocity, rad/s.
    pub angular_velocity: Vec3,
}

impl RigidState {
    pub fn at_rest(position: Vec3, orientation: Rotation) -> Self {
        Self {
            position,
            orientation,
            velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        let [w, x, y, z] = self.orientation.wxyz();
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
            && [w, x, y, z].iter().all(|v| v.is_finite())
    }
}

/// Collective thrust (N, along body `+b3`) and body moment (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub thrust: f64,
    pub moment: Vec3,
}

impl Wrench {
    pub fn new(thrust: f64, moment: Vec3) -> Self {
        Self { thrust, moment }
    }
}

/// Physical and actuation parameters shared by every robot in a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotParams {
    mass: f64,
    inertia: Mat3,
    inertia_inv: Mat3,
    pub collision_radius: f64,
    pub max_thrust: f64,
    pub max_moment: Vec3,
    pub gravity: f64,
    pub v_hard_limit: f64,
    pub omega_hard_limit: f64,
}

impl RobotParams {
    pub fn new(
        mass: f64,
        inertia: Mat3,
        collision_radius: f64,
        max_thrust: f64,
        max_moment: Vec3,
        gravity: f64,
    ) -> Result<Self, DynamicsError> {
        let bad = |msg: String| Err(DynamicsError::InvalidParams(msg));
        if !(mass > 0.0 && mass.is_finite()) {
            return bad(format!("mass must be positive, got {mass}"));
        }
        if (inertia - inertia.transpose()).abs().max() > 1e-12 * inertia.abs().max() {
            return bad("inertia matrix is not symmetric".into());
        }
        if inertia.cholesky().is_none() {
            return bad("inertia matrix is not positive definite".into());
        }
        let Some(inertia_inv) = inertia.try_inverse() else {
            return bad("inertia matrix is singular".into());
        };
        if !(gravity >= 0.0 && gravity.is_finite()) {
            return bad(format!("gravity must be non-negative, got {gravity}"));
        }
        if !(max_thrust > mass * gravity) {
            return bad(format!(
                "max thrust {max_thrust} N cannot lift {} N",
                mass * gravity
            ));
        }
        if max_moment.iter().any(|m| !(*m > 0.0)) {
            return bad("every max moment component must be positive".into());
        }
        if !(collision_radius > 0.0) {
            return bad("collision radius must be positive".into());
        }
        Ok(Self {
            mass,
            inertia,
            inertia_inv,
            collision_radius,
            max_thrust,
            max_moment,
            gravity,
            v_hard_limit: DEFAULT_V_HARD_LIMIT,
            omega_hard_limit: DEFAULT_OMEGA_HARD_LIMIT,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Mat3 {
        &self.inertia
    }

    pub fn inertia_inv(&self) -> &Mat3 {
        &self.inertia_inv
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

impl Default for RobotParams {
    /// 1 kg quadrotor, J = diag(0.01, 0.01, 0.02) kg·m².
    fn default() -> Self {
        Self::new(
            1.0,
            Mat3::from_diagonal(&Vec3::new(0.01, 0.01, 0.02)),
            0.2,
            20.0,
            Vec3::new(2.0, 2.0, 1.0),
            DEFAULT_GRAVITY,
        )
        .expect("default robot parameters are valid")
    }
}

/// Clamps thrust to `[0, f_max]` and each moment component to `±M_max`.
pub fn saturate(raw: &Wrench, params: &RobotParams) -> Wrench {
    let thrust = raw.thrust.clamp(0.0, params.max_thrust);
    let moment = Vec3::from_fn(|i, _| {
        raw.moment[i].clamp(-params.max_moment[i], params.max_moment[i])
    });
    Wrench { thrust, moment }
}

/// Result of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: RigidState,
    /// Set when a hard velocity or angular-rate limit was applied.
    pub clamped: bool,
}

fn clamp_norm(v: Vec3, limit: f64) -> (Vec3, bool) {
    let n = v.norm();
    if n > limit {
        (v * (limit / n), true)
    } else {
        (v, false)
    }
}

/// Advances one robot by `dt` under an already saturated wrench.
pub fn step(
    state: &RigidState,
    params: &RobotParams,
    wrench: &Wrench,
    dt: f64,
) -> Result<StepOutcome, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(DynamicsError::InvalidTimeStep(dt));
    }
    let thrust_dir = state.orientation.rotate(&Vec3::z());
    let accel = thrust_dir * (wrench.thrust / params.mass) + Vec3::new(0.0, 0.0, -params.gravity);
    let (velocity, v_clamped) = clamp_norm(state.velocity + accel * dt, params.v_hard_limit);
    let position = state.position + velocity * dt;

    let omega = state.angular_velocity;
    let gyro = omega.cross(&(params.inertia * omega));
    let omega_dot = params.inertia_inv * (wrench.moment - gyro);
    let (angular_velocity, w_clamped) =
        clamp_norm(omega + omega_dot * dt, params.omega_hard_limit);
    let orientation = state
        .orientation
        .compose(&exp_so3(&(angular_velocity * dt)));

    let next = RigidState {
        position,
        orientation,
        velocity,
        angular_velocity,
    };
    if !next.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    Ok(StepOutcome {
        state: next,
        clamped: v_clamped || w_clamped,
    })
}

/// Per-robot status reported by [`step_batch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepFlag {
    #[default]
    Nominal,
    Clamped,
    /// The step diverged; the robot's previous state was kept.
    NonFinite,
}

/// Batched robot states in structure-of-arrays layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateBatch {
    pub positions: Vec<Vec3>,
    pub orientations: Vec<Rotation>,
    pub velocities: Vec<Vec3>,
    pub angular_velocities: Vec<Vec3>,
}

impl StateBatch {
    pub fn from_states(states: &[RigidState]) -> Self {
        let mut batch = Self::default();
        for s in states {
            batch.push(*s);
        }
        batch
    }

    pub fn push(&mut self, s: RigidState) {
        self.positions.push(s.position);
        self.orientations.push(s.orientation);
        self.velocities.push(s.velocity);
        self.angular_velocities.push(s.angular_velocity);
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn get(&self, i: usize) -> RigidState {
        RigidState {
            position: self.positions[i],
            orientation: self.orientations[i],
            velocity: self.velocities[i],
            angular_velocity: self.angular_velocities[i],
        }
    }

    pub fn set(&mut self, i: usize, s: RigidState) {
        self.positions[i] = s.position;
        self.orientations[i] = s.orientation;
        self.velocities[i] = s.velocity;
        self.angular_velocities[i] = s.angular_velocity;
    }

    pub fn to_states(&self) -> Vec<RigidState> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

/// Steps every robot in place. Runs on the current rayon pool; the result
/// does not depend on how the batch is partitioned across workers.
pub fn step_batch(
    batch: &mut StateBatch,
    params: &RobotParams,
    wrenches: &[Wrench],
    dt: f64,
) -> Result<Vec<StepFlag>, DynamicsError> {
    if batch.len() != wrenches.len() {
        return Err(DynamicsError::LengthMismatch {
            states: batch.len(),
            wrenches: wrenches.len(),
        });
    }
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(DynamicsError::InvalidTimeStep(dt));
    }
    let StateBatch {
        positions,
        orientations,
        velocities,
        angular_velocities,
    } = batch;
    let flags = (
        positions.par_iter_mut(),
        orientations.par_iter_mut(),
        velocities.par_iter_mut(),
        angular_velocities.par_iter_mut(),
        wrenches.par_iter(),
    )
        .into_par_iter()
        .with_min_len(64)
        .map(|(p, q, v, w, wrench)| {
            let state = RigidState {
                position: *p,
                orientation: *q,
                velocity: *v,
                angular_velocity: *w,
            };
            match step(&state, params, wrench, dt) {
                Ok(out) => {
                    *p = out.state.position;
                    *q = out.state.orientation;
                    *v = out.state.velocity;
                    *w = out.state.angular_velocity;
                    if out.clamped {
                        StepFlag::Clamped
                    } else {
                        StepFlag::Nominal
                    }
                }
                Err(_) => StepFlag::NonFinite,
            }
        })
        .collect();
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::rot_zyx;

    fn hover_wrench(p: &RobotParams) -> Wrench {
        Wrench::new(p.hover_thrust(), Vec3::zeros())
    }

    #[test]
    fn hover_is_a_fixed_point() {
        let params = RobotParams::default();
        let s0 = RigidState::at_rest(Vec3::new(1.0, 2.0, 3.0), Rotation::identity());
        let mut s = s0;
        for _ in 0..1000 {
            s = step(&s, &params, &hover_wrench(&params), 0.01).unwrap().state;
        }
        assert_eq!(s, s0);
    }

    #[test]
    fn ballistic_matches_discrete_closed_form() {
        let params = RobotParams::default();
        let g = params.gravity;
        let dt = 0.01;
        let mut s = RigidState::at_rest(Vec3::zeros(), Rotation::identity());
        s.velocity = Vec3::new(1.0, 0.0, 0.0);
        let n = 100;
        for _ in 0..n {
            s = step(&s, &params, &Wrench::default(), dt).unwrap().state;
        }
        // v_k = -g k dt, p_n = dt Σ_{k=1..n} v_k = -g dt² n(n+1)/2
        let nf = n as f64;
        let z = -g * dt * dt * nf * (nf + 1.0) / 2.0;
        assert!((s.position.x - 1.0).abs() < 1e-12);
        assert!((s.position.z - z).abs() < 1e-12, "{} vs {z}", s.position.z);
        assert!((s.velocity.z + g * dt * nf).abs() < 1e-12);
    }

    #[test]
    fn principal_axis_spin_is_steady() {
        let params = RobotParams::new(
            1.0,
            Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 2.0)),
            0.2,
            20.0,
            Vec3::new(1.0, 1.0, 1.0),
            DEFAULT_GRAVITY,
        )
        .unwrap();
        let mut s = RigidState::at_rest(Vec3::zeros(), Rotation::identity());
        s.angular_velocity = Vec3::new(0.0, 0.0, 3.0);
        for _ in 0..100 {
            s = step(&s, &params, &hover_wrench(&params), 0.01).unwrap().state;
        }
        assert_eq!(s.angular_velocity, Vec3::new(0.0, 0.0, 3.0));
    }

    #[test]
    fn force_free_speed_is_constant() {
        let params = RobotParams::new(
            1.0,
            Mat3::from_diagonal(&Vec3::new(0.01, 0.01, 0.02)),
            0.2,
            1.0,
            Vec3::new(1.0, 1.0, 1.0),
            0.0,
        )
        .unwrap();
        let mut s = RigidState::at_rest(Vec3::zeros(), rot_zyx(0.2, 0.1, 0.3));
        s.velocity = Vec3::new(0.3, -2.0, 1.1);
        let speed = s.velocity.norm();
        for _ in 0..50 {
            s = step(&s, &params, &Wrench::default(), 0.01).unwrap().state;
            assert!((s.velocity.norm() - speed).abs() < 1e-12);
        }
    }

    #[test]
    fn saturate_examples() {
        let p = RobotParams::default();
        assert_eq!(saturate(&Wrench::new(-2.0, Vec3::zeros()), &p).thrust, 0.0);
        assert_eq!(saturate(&hover_wrench(&p), &p), hover_wrench(&p));
        let p1 = RobotParams::new(
            1.0,
            Mat3::from_diagonal(&Vec3::new(0.01, 0.01, 0.02)),
            0.2,
            20.0,
            Vec3::new(1.0, 1.0, 1.0),
            DEFAULT_GRAVITY,
        )
        .unwrap();
        let w = saturate(&Wrench::new(5.0, Vec3::new(10.0, 0.0, 0.0)), &p1);
        assert_eq!(w.moment, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(saturate(&Wrench::new(99.0, Vec3::zeros()), &p1).thrust, 20.0);
    }

    #[test]
    fn hard_limits_clamp_and_flag() {
        let p = RobotParams::default();
        let s = RigidState {
            velocity: Vec3::new(80.0, 0.0, 0.0),
            ..RigidState::default()
        };
        let out = step(&s, &p, &hover_wrench(&p), 0.01).unwrap();
        assert!(out.clamped);
        assert!((out.state.velocity.norm() - p.v_hard_limit).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_is_reported() {
        let p = RobotParams::default();
        let mut s = RigidState::default();
        s.position.x = f64::NAN;
        assert_eq!(
            step(&s, &p, &hover_wrench(&p), 0.01),
            Err(DynamicsError::NonFiniteState)
        );
        let mut batch = StateBatch::from_states(&[s, RigidState::default()]);
        let flags = step_batch(&mut batch, &p, &[hover_wrench(&p); 2], 0.01).unwrap();
        assert_eq!(flags, vec![StepFlag::NonFinite, StepFlag::Nominal]);
        assert!(batch.positions[0].x.is_nan());
    }

    #[test]
    fn invalid_params_and_dt_are_rejected() {
        let j = Mat3::from_diagonal(&Vec3::new(0.01, 0.01, 0.02));
        let m = Vec3::new(1.0, 1.0, 1.0);
        assert!(RobotParams::new(0.0, j, 0.2, 20.0, m, 9.81).is_err());
        assert!(RobotParams::new(1.0, -j, 0.2, 20.0, m, 9.81).is_err());
        assert!(RobotParams::new(1.0, j, 0.2, 9.0, m, 9.81).is_err());
        assert!(RobotParams::new(1.0, j, 0.2, 20.0, Vec3::new(1.0, 0.0, 1.0), 9.81).is_err());
        let p = RobotParams::default();
        assert!(step(&RigidState::default(), &p, &Wrench::default(), 0.0).is_err());
        assert!(step(&RigidState::default(), &p, &Wrench::default(), 0.2).is_err());
    }

    #[test]
    fn batch_matches_scalar_and_rejects_mismatch() {
        let p = RobotParams::default();
        let s = RigidState {
            position: Vec3::new(0.1, 0.2, 0.3),
            orientation: rot_zyx(0.1, -0.2, 0.3),
            velocity: Vec3::new(1.0, -1.0, 0.5),
            angular_velocity: Vec3::new(0.3, 0.2, -0.1),
        };
        let w = Wrench::new(9.0, Vec3::new(0.01, -0.02, 0.003));
        let mut batch = StateBatch::from_states(&[s, s]);
        step_batch(&mut batch, &p, &[w, w], 0.01).unwrap();
        let expected = step(&s, &p, &w, 0.01).unwrap().state;
        assert_eq!(batch.get(0), expected);
        assert_eq!(batch.get(1), expected);
        assert!(matches!(
            step_batch(&mut batch, &p, &[w], 0.01),
            Err(DynamicsError::LengthMismatch { .. })
        ));
    }
}
