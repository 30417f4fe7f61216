//! Simulator configuration file.
//!
//! YAML with the sections `robot`, `gains`, `env`, `asset_classes`,
//! `camera` and `reward`. Every field has a default, so an empty document
//! is a valid configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::AssetClassConfig;
use crate::control::{ControlGains, ControllerConfig};
use crate::dynamics::{RobotParams, MAX_DT};
use crate::se3::{rot_zyx, Mat3, Vec3};
use crate::geometry::Pose;

/// Bumped whenever a field changes meaning; bindings pin against it.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_yaml::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    pub mass: f64,
    /// Row-major body-frame inertia, kg·m².
    pub inertia: [[f64; 3]; 3],
    pub collision_radius: f64,
    pub max_thrust: f64,
    pub max_moment: Vec3,
    pub gravity: f64,
    pub v_hard_limit: f64,
    pub omega_hard_limit: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        let p = RobotParams::default();
        let j = p.inertia();
        Self {
            mass: p.mass(),
            inertia: [0, 1, 2].map(|r| [j[(r, 0)], j[(r, 1)], j[(r, 2)]]),
            collision_radius: p.collision_radius,
            max_thrust: p.max_thrust,
            max_moment: p.max_moment,
            gravity: p.gravity,
            v_hard_limit: p.v_hard_limit,
            omega_hard_limit: p.omega_hard_limit,
        }
    }
}

impl RobotConfig {
    pub fn params(&self) -> Result<RobotParams, ConfigError> {
        let j = Mat3::from_fn(|r, c| self.inertia[r][c]);
        let mut p = RobotParams::new(
            self.mass,
            j,
            self.collision_radius,
            self.max_thrust,
            self.max_moment,
            self.gravity,
        )
        .map_err(|e| ConfigError::Invalid(format!("robot: {e}")))?;
        if !(self.v_hard_limit > 0.0 && self.omega_hard_limit > 0.0) {
            return invalid("robot: hard limits must be positive");
        }
        p.v_hard_limit = self.v_hard_limit;
        p.omega_hard_limit = self.omega_hard_limit;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    pub k_r: Vec3,
    pub k_omega: Vec3,
    pub k_v: Vec3,
    pub tilt_max: f64,
    pub v_cmd_max: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        let c = ControllerConfig::default();
        Self {
            k_r: c.gains.k_r,
            k_omega: c.gains.k_omega,
            k_v: c.gains.k_v,
            tilt_max: c.tilt_max,
            v_cmd_max: c.v_cmd_max,
        }
    }
}

impl GainsConfig {
    pub fn controller(&self) -> Result<ControllerConfig, ConfigError> {
        let gains = ControlGains {
            k_r: self.k_r,
            k_omega: self.k_omega,
            k_v: self.k_v,
        };
        gains
            .validate()
            .map_err(|_| ConfigError::Invalid("gains: every gain must be strictly positive".into()))?;
        if !(self.tilt_max > 0.0 && self.tilt_max < std::f64::consts::FRAC_PI_2) {
            return invalid("gains: tilt_max must lie in (0, π/2)");
        }
        if !(self.v_cmd_max > 0.0) {
            return invalid("gains: v_cmd_max must be positive");
        }
        Ok(ControllerConfig {
            gains,
            tilt_max: self.tilt_max,
            v_cmd_max: self.v_cmd_max,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    Attitude,
    #[default]
    Velocity,
}

/// Scales that map normalized `[-1, 1]` actions to commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionRanges {
    pub roll: f64,
    pub pitch: f64,
    pub yaw_rate: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub speed: f64,
}

impl Default for ActionRanges {
    fn default() -> Self {
        Self {
            roll: 0.5,
            pitch: 0.5,
            yaw_rate: 1.0,
            thrust_min: 0.0,
            thrust_max: 20.0,
            speed: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub num_envs: usize,
    /// Environment box extents, m. The env-local origin is the box corner.
    pub bounds: Vec3,
    pub episode_max_steps: u32,
    pub dt: f64,
    pub wall_enabled: bool,
    pub wall_thickness: f64,
    pub wall_segmentation_id: u32,
    /// Fractional robot spawn region.
    pub spawn_min: Vec3,
    pub spawn_max: Vec3,
    /// Fractional goal region.
    pub goal_min: Vec3,
    pub goal_max: Vec3,
    pub control_mode: ControlMode,
    pub seed: u64,
    /// Asset directory; relative paths resolve against the config file.
    pub asset_root: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub actions: ActionRanges,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            num_envs: 16,
            bounds: Vec3::new(10.0, 10.0, 5.0),
            episode_max_steps: 1500,
            dt: 0.01,
            wall_enabled: true,
            wall_thickness: 0.1,
            wall_segmentation_id: 100,
            spawn_min: Vec3::new(0.1, 0.1, 0.2),
            spawn_max: Vec3::new(0.9, 0.9, 0.8),
            goal_min: Vec3::new(0.1, 0.1, 0.2),
            goal_max: Vec3::new(0.9, 0.9, 0.8),
            control_mode: ControlMode::Velocity,
            seed: 0,
            asset_root: None,
            workers: 0,
            actions: ActionRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub enabled: bool,
    pub width: u32,
    pub height: u32,
    /// Horizontal field of view, rad.
    pub hfov: f64,
    pub max_range: f64,
    /// Nominal mount in the body frame (camera looks along its +x).
    pub mount_position: Vec3,
    /// Nominal mount ZYX Euler angles (roll, pitch, yaw), rad.
    pub mount_euler: Vec3,
    /// Half-widths of the uniform mount randomization.
    pub randomize_position: Vec3,
    pub randomize_euler: Vec3,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            width: 480,
            height: 270,
            hfov: 1.57,
            max_range: 10.0,
            mount_position: Vec3::new(0.1, 0.0, 0.0),
            mount_euler: Vec3::zeros(),
            randomize_position: Vec3::zeros(),
            randomize_euler: Vec3::zeros(),
        }
    }
}

impl CameraConfig {
    pub fn nominal_mount(&self) -> Pose {
        let e = self.mount_euler;
        Pose::new(self.mount_position, rot_zyx(e.x, e.y, e.z))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.width < 1 || self.height < 1 {
            return invalid("camera: width and height must be at least 1");
        }
        if !(self.hfov > 0.0 && self.hfov < std::f64::consts::PI) {
            return invalid("camera: hfov must lie in (0, π)");
        }
        if !(self.max_range > 0.0) {
            return invalid("camera: max_range must be positive");
        }
        let r = self.randomize_position.iter().chain(self.randomize_euler.iter());
        if r.clone().any(|v| !(*v >= 0.0)) {
            return invalid("camera: randomization half-widths must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub c_dist: f64,
    pub c_vel: f64,
    pub c_step: f64,
    pub c_success: f64,
    pub c_crash: f64,
    pub success_radius: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            c_dist: 0.1,
            c_vel: 0.01,
            c_step: 0.01,
            c_success: 10.0,
            c_crash: 10.0,
            success_radius: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub schema_version: u32,
    pub robot: RobotConfig,
    pub gains: GainsConfig,
    pub env: EnvSection,
    pub asset_classes: Vec<AssetClassConfig>,
    pub camera: CameraConfig,
    pub reward: RewardConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            robot: RobotConfig::default(),
            gains: GainsConfig::default(),
            env: EnvSection::default(),
            asset_classes: Vec::new(),
            camera: CameraConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_yaml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = serde_yaml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving a relative
    /// `env.asset_root` against the file's directory.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_yaml_str(&text)?;
        if let Some(root) = &cfg.env.asset_root {
            if root.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.env.asset_root = Some(base.join(root));
            }
        }
        Ok(cfg)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let params = self.robot.params()?;
        self.gains.controller()?;
        self.camera.validate()?;
        let e = &self.env;
        if e.num_envs < 1 {
            return invalid("env: num_envs must be at least 1");
        }
        if e.bounds.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return invalid("env: bounds must be positive");
        }
        if !(e.dt > 0.0 && e.dt <= MAX_DT) {
            return invalid(format!("env: dt must lie in (0, {MAX_DT}]"));
        }
        if e.episode_max_steps < 1 {
            return invalid("env: episode_max_steps must be at least 1");
        }
        if !(e.wall_thickness > 0.0) {
            return invalid("env: wall_thickness must be positive");
        }
        for (lo, hi, what) in [(e.spawn_min, e.spawn_max, "spawn"), (e.goal_min, e.goal_max, "goal")] {
            for i in 0..3 {
                if !(0.0 <= lo[i] && lo[i] <= hi[i] && hi[i] <= 1.0) {
                    return invalid(format!("env: {what} bounds must satisfy 0 ≤ min ≤ max ≤ 1"));
                }
            }
        }
        let a = &e.actions;
        if !(a.roll > 0.0 && a.roll < std::f64::consts::FRAC_PI_2)
            || !(a.pitch > 0.0 && a.pitch < std::f64::consts::FRAC_PI_2)
        {
            return invalid("env.actions: roll and pitch ranges must lie in (0, π/2)");
        }
        if !(a.yaw_rate >= 0.0 && a.speed >= 0.0 && a.thrust_min >= 0.0 && a.thrust_min < a.thrust_max) {
            return invalid("env.actions: ranges must be non-negative with thrust_min < thrust_max");
        }
        if a.thrust_max > params.max_thrust {
            return invalid("env.actions: thrust_max exceeds robot max_thrust");
        }
        for class in &self.asset_classes {
            class
                .validate()
                .map_err(|err| ConfigError::Invalid(err.to_string()))?;
        }
        if !self.asset_classes.is_empty() && e.asset_root.is_none() {
            return invalid("env: asset_classes are configured but env.asset_root is not set");
        }
        Ok(())
    }
}
