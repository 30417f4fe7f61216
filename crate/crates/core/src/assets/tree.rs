//! Procedural multi-link trees built from cylinders.
//!
//! The trunk stands on the origin along +z. Every branch spawns
//! `branch_factor` children attached at its tip, each scaled by the length
//! and radius decays and tilted by a random pitch and yaw drawn uniformly
//! from `[-angle_range, angle_range]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::urdf::{Collision, Joint, Link, Origin, UrdfModel};
use super::{AssetError, AssetPrototype};
use crate::geometry::Shape;
use crate::rng::uniform;
use crate::se3::Vec3;

pub const MAX_TREE_PRIMITIVES: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub trunk_length: f64,
    pub trunk_radius: f64,
    pub branch_factor: u32,
    pub depth: u32,
    pub length_decay: f64,
    pub radius_decay: f64,
    pub angle_range: f64,
    pub seed: u64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self {
            trunk_length: 2.0,
            trunk_radius: 0.15,
            branch_factor: 3,
            depth: 3,
            length_decay: 0.6,
            radius_decay: 0.6,
            angle_range: 0.8,
            seed: 0,
        }
    }
}

impl TreeSpec {
    /// `Σ_{k=0}^{depth-1} branch_factor^k`, or `None` on overflow.
    pub fn primitive_count(&self) -> Option<u64> {
        let b = self.branch_factor as u64;
        let mut total: u64 = 0;
        let mut level: u64 = 1;
        for _ in 0..self.depth {
            total = total.checked_add(level)?;
            level = level.checked_mul(b)?;
        }
        Some(total)
    }

    fn validate(&self) -> Result<u64, AssetError> {
        let invalid = |m: &str| Err(AssetError::InvalidTreeSpec(m.to_string()));
        if self.depth < 1 {
            return invalid("depth must be at least 1");
        }
        if !(self.trunk_length > 0.0 && self.trunk_length.is_finite()) {
            return invalid("trunk length must be positive");
        }
        if !(self.trunk_radius > 0.0 && self.trunk_radius.is_finite()) {
            return invalid("trunk radius must be positive");
        }
        for decay in [self.length_decay, self.radius_decay] {
            if !(decay > 0.0 && decay <= 1.0) {
                return invalid("decays must lie in (0, 1]");
            }
        }
        if !(self.angle_range >= 0.0 && self.angle_range.is_finite()) {
            return invalid("angle range must be non-negative");
        }
        match self.primitive_count() {
            Some(n) if n <= MAX_TREE_PRIMITIVES => Ok(n),
            n => Err(AssetError::TooManyPrimitives {
                count: n.unwrap_or(u64::MAX),
                limit: MAX_TREE_PRIMITIVES,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTree {
    pub model: UrdfModel,
    pub prototype: AssetPrototype,
    pub urdf: String,
}

pub fn generate_tree(spec: &TreeSpec) -> Result<GeneratedTree, AssetError> {
    let count = spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut links = Vec::with_capacity(count as usize);
    let mut joints = Vec::with_capacity(count as usize);

    // breadth-first: (link index, level, length, radius)
    let mut frontier = vec![(0usize, 0u32, spec.trunk_length, spec.trunk_radius)];
    links.push(branch_link(0, spec.trunk_length, spec.trunk_radius));
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for (parent, level, length, radius) in frontier {
            if level + 1 >= spec.depth {
                continue;
            }
            for _ in 0..spec.branch_factor {
                let id = links.len();
                let (l, r) = (length * spec.length_decay, radius * spec.radius_decay);
                let pitch = uniform(&mut rng, -spec.angle_range, spec.angle_range);
                let yaw = uniform(&mut rng, -spec.angle_range, spec.angle_range);
                links.push(branch_link(id, l, r));
                joints.push(Joint {
                    name: format!("joint_{id}"),
                    parent: format!("branch_{parent}"),
                    child: format!("branch_{id}"),
                    origin: Origin {
                        xyz: Vec3::new(0.0, 0.0, length),
                        rpy: Vec3::new(0.0, pitch, yaw),
                    },
                });
                next.push((id, level + 1, l, r));
            }
        }
        frontier = next;
    }
    debug_assert_eq!(links.len() as u64, count);

    let model = UrdfModel {
        name: format!("tree_{}", spec.seed),
        links,
        joints,
    };
    let urdf = model.to_urdf_string();
    let primitives = model.primitives().map_err(|source| AssetError::Parse {
        file: "<generated tree>".into(),
        source,
    })?;
    Ok(GeneratedTree {
        prototype: AssetPrototype {
            source: format!("generated:tree_{}", spec.seed),
            class: "trees".into(),
            primitives,
        },
        model,
        urdf,
    })
}

fn branch_link(id: usize, length: f64, radius: f64) -> Link {
    Link {
        name: format!("branch_{id}"),
        collisions: vec![Collision {
            origin: Origin {
                xyz: Vec3::new(0.0, 0.0, 0.5 * length),
                rpy: Vec3::zeros(),
            },
            shape: Shape::Cylinder { radius, length },
        }],
    }
}
