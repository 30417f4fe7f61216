//! Obstacle asset management.
//!
//! Assets live in a class-per-directory layout (`<root>/<class>/*.urdf`).
//! Each environment draws its obstacles from the class pools uniformly with
//! replacement, then places them with poses randomized inside fractional
//! bounds of the environment box. Any position or Euler dimension can be
//! frozen to a constant.

mod tree;
mod urdf;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PlacedPrimitive, Pose, Primitive};
use crate::rng::uniform;
use crate::se3::{rot_zyx, Vec3};

pub use tree::{generate_tree, GeneratedTree, TreeSpec, MAX_TREE_PRIMITIVES};
pub use urdf::{Collision, Joint, Link, Origin, UrdfError, UrdfModel};

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("asset class directory {0} holds no .urdf files")]
    EmptyClassDir(PathBuf),
    #[error("{file}: {source}")]
    Parse {
        file: String,
        #[source]
        source: UrdfError,
    },
    #[error("asset class \"{0}\" is not present in the loaded pools")]
    UnknownClass(String),
    #[error("invalid asset class config \"{class}\": {reason}")]
    InvalidClassConfig { class: String, reason: String },
    #[error("invalid tree spec: {0}")]
    InvalidTreeSpec(String),
    #[error("tree would have {count} primitives (limit {limit})")]
    TooManyPrimitives { count: u64, limit: u64 },
}

/// Per-class placement rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetClassConfig {
    /// Directory name under the asset root.
    pub name: String,
    pub count_per_env: usize,
    /// Position bounds as fractions of the environment extents.
    #[serde(default = "zeros")]
    pub position_min: Vec3,
    #[serde(default = "ones")]
    pub position_max: Vec3,
    /// ZYX Euler bounds (roll, pitch, yaw), rad.
    #[serde(default = "zeros")]
    pub euler_min: Vec3,
    #[serde(default = "zeros")]
    pub euler_max: Vec3,
    /// Env-local position constants (m) that override randomization.
    #[serde(default)]
    pub frozen_position: [Option<f64>; 3],
    /// Euler constants (rad) that override randomization.
    #[serde(default)]
    pub frozen_euler: [Option<f64>; 3],
    pub segmentation_id: u32,
    #[serde(default = "enabled")]
    pub collision_enabled: bool,
}

fn zeros() -> Vec3 {
    Vec3::zeros()
}

fn ones() -> Vec3 {
    Vec3::repeat(1.0)
}

fn enabled() -> bool {
    true
}

impl AssetClassConfig {
    pub fn new(name: impl Into<String>, count_per_env: usize, segmentation_id: u32) -> Self {
        Self {
            name: name.into(),
            count_per_env,
            position_min: zeros(),
            position_max: ones(),
            euler_min: zeros(),
            euler_max: zeros(),
            frozen_position: [None; 3],
            frozen_euler: [None; 3],
            segmentation_id,
            collision_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<(), AssetError> {
        let fail = |reason: &str| {
            Err(AssetError::InvalidClassConfig {
                class: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.segmentation_id < 1 {
            return fail("segmentation_id must be at least 1");
        }
        for i in 0..3 {
            let (lo, hi) = (self.position_min[i], self.position_max[i]);
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
                return fail("position bounds are fractions in [0, 1]");
            }
            if lo > hi {
                return fail("position_min exceeds position_max");
            }
            if !(self.euler_min[i] <= self.euler_max[i]) {
                return fail("euler_min exceeds euler_max");
            }
        }
        let frozen = self.frozen_position.iter().chain(&self.frozen_euler);
        if frozen.flatten().any(|v| !v.is_finite()) {
            return fail("frozen values must be finite");
        }
        Ok(())
    }
}

/// A loaded asset file flattened to primitives in its root-link frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetPrototype {
    pub source: String,
    pub class: String,
    pub primitives: Vec<Primitive>,
}

/// Prototype pools keyed by class name.
pub type AssetPools = BTreeMap<String, Vec<Arc<AssetPrototype>>>;

/// One obstacle placed in one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetInstance {
    pub prototype: Arc<AssetPrototype>,
    /// Env-local pose of the asset's root frame.
    pub pose: Pose,
    pub segmentation_id: u32,
    pub collision_enabled: bool,
    pub env_index: usize,
}

impl AssetInstance {
    pub fn class(&self) -> &str {
        &self.prototype.class
    }

    /// Primitives in env-local coordinates.
    pub fn placed_primitives(&self) -> impl Iterator<Item = PlacedPrimitive> + '_ {
        self.prototype.primitives.iter().map(|p| PlacedPrimitive {
            primitive: Primitive {
                shape: p.shape,
                pose: self.pose.compose(&p.pose),
            },
            segmentation_id: self.segmentation_id,
        })
    }
}

/// Parses one URDF document into a prototype.
pub fn parse_urdf_subset(text: &str) -> Result<AssetPrototype, UrdfError> {
    let model = UrdfModel::parse(text)?;
    Ok(AssetPrototype {
        source: String::new(),
        class: String::new(),
        primitives: model.primitives()?,
    })
}

/// Loads every `<root>/<class>/*.urdf`. Files are read in name order so
/// pool indices are stable across machines.
pub fn load_asset_dir(root: &Path) -> Result<AssetPools, AssetError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| AssetError::Io { path, source }
    };
    let mut class_dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(io(root))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io(root))?;
    class_dirs.retain(|p| p.is_dir());
    class_dirs.sort();

    let mut pools = AssetPools::new();
    for dir in class_dirs {
        let class = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(io(&dir))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io(&dir))?;
        files.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("urdf")));
        files.sort();
        if files.is_empty() {
            return Err(AssetError::EmptyClassDir(dir));
        }
        let mut pool = Vec::with_capacity(files.len());
        for file in files {
            let text = std::fs::read_to_string(&file).map_err(io(&file))?;
            let mut proto = parse_urdf_subset(&text).map_err(|source| AssetError::Parse {
                file: file.display().to_string(),
                source,
            })?;
            proto.source = file.display().to_string();
            proto.class = class.clone();
            pool.push(Arc::new(proto));
        }
        pools.insert(class, pool);
    }
    Ok(pools)
}

/// Picks `count_per_env` prototypes per configured class, uniformly with
/// replacement. Instances start at the identity pose; see
/// [`randomize_pose`].
pub fn sample_env_assets<R: Rng>(
    pools: &AssetPools,
    classes: &[AssetClassConfig],
    env_index: usize,
    rng: &mut R,
) -> Result<Vec<AssetInstance>, AssetError> {
    let mut out = Vec::with_capacity(classes.iter().map(|c| c.count_per_env).sum());
    for cfg in classes {
        let pool = pools
            .get(&cfg.name)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| AssetError::UnknownClass(cfg.name.clone()))?;
        for _ in 0..cfg.count_per_env {
            let pick = rng.gen_range(0..pool.len());
            out.push(AssetInstance {
                prototype: Arc::clone(&pool[pick]),
                pose: Pose::default(),
                segmentation_id: cfg.segmentation_id,
                collision_enabled: cfg.collision_enabled,
                env_index,
            });
        }
    }
    Ok(out)
}

/// Draws a new pose for `inst` inside the class bounds. `env_bounds` are
/// the extents of the environment box whose corner is the env-local origin.
pub fn randomize_pose<R: Rng>(
    inst: &AssetInstance,
    cfg: &AssetClassConfig,
    env_bounds: &Vec3,
    rng: &mut R,
) -> AssetInstance {
    let position = Vec3::from_fn(|i, _| {
        // draw even when frozen so frozen dims don't shift the other draws
        let u = uniform(rng, cfg.position_min[i], cfg.position_max[i]);
        cfg.frozen_position[i].unwrap_or(u * env_bounds[i])
    });
    let euler = Vec3::from_fn(|i, _| {
        let a = uniform(rng, cfg.euler_min[i], cfg.euler_max[i]);
        cfg.frozen_euler[i].unwrap_or(a)
    });
    AssetInstance {
        pose: Pose::new(position, rot_zyx(euler.x, euler.y, euler.z)),
        ..inst.clone()
    }
}
