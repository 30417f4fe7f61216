//! Analytic collision primitives and rigid poses.

use serde::{Deserialize, Serialize};

use crate::se3::{Rotation, Vec3};

/// Rigid transform: `p_parent = rotation * p_local + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: Rotation,
}

impl Pose {
    pub fn new(translation: Vec3, rotation: Rotation) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(translation, Rotation::identity())
    }

    /// `self ∘ child`: the pose of `child` (given relative to `self`) in
    /// the parent frame of `self`.
    pub fn compose(&self, child: &Pose) -> Pose {
        Pose {
            translation: self.translation + self.rotation.rotate(&child.translation),
            rotation: self.rotation.compose(&child.rotation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse_rotate(&(p - self.translation))
    }
}

/// Primitive shapes. Cylinders are centered on their local origin with the
/// axis along local z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Box { size: Vec3 },
    Cylinder { radius: f64, length: f64 },
    Sphere { radius: f64 },
}

impl Shape {
    pub fn is_valid(&self) -> bool {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match self {
            Shape::Box { size } => size.iter().all(|v| pos(*v)),
            Shape::Cylinder { radius, length } => pos(*radius) && pos(*length),
            Shape::Sphere { radius } => pos(*radius),
        }
    }

    /// Distance from a point in the shape's local frame to its surface; 0
    /// inside.
    pub fn distance_local(&self, p: &Vec3) -> f64 {
        match *self {
            Shape::Box { size } => {
                let half = size * 0.5;
                let outside = Vec3::from_fn(|i, _| (p[i].abs() - half[i]).max(0.0));
                outside.norm()
            }
            Shape::Cylinder { radius, length } => {
                let radial = ((p.x * p.x + p.y * p.y).sqrt() - radius).max(0.0);
                let axial = (p.z.abs() - 0.5 * length).max(0.0);
                radial.hypot(axial)
            }
            Shape::Sphere { radius } => (p.norm() - radius).max(0.0),
        }
    }

    /// Radius of the smallest sphere about the shape's origin that
    /// contains it.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            _ => self.local_half_extents().norm(),
        }
    }

    /// Half extents of the local axis-aligned bounding box.
    fn local_half_extents(&self) -> Vec3 {
        match *self {
            Shape::Box { size } => size * 0.5,
            Shape::Cylinder { radius, length } => Vec3::new(radius, radius, 0.5 * length),
            Shape::Sphere { radius } => Vec3::repeat(radius),
        }
    }
}

/// A shape placed in a parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub pose: Pose,
}

impl Primitive {
    pub fn distance(&self, p: &Vec3) -> f64 {
        self.shape.distance_local(&self.pose.inverse_transform_point(p))
    }

    pub fn aabb(&self) -> Aabb {
        let half = self.shape.local_half_extents();
        let r = self.pose.rotation.matrix();
        let extent = Vec3::from_fn(|i, _| {
            r[(i, 0)].abs() * half.x + r[(i, 1)].abs() * half.y + r[(i, 2)].abs() * half.z
        });
        Aabb {
            min: self.pose.translation - extent,
            max: self.pose.translation + extent,
        }
    }
}

/// A collision-enabled primitive in env-local coordinates, tagged with the
/// segmentation id of the asset it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedPrimitive {
    pub primitive: Primitive,
    pub segmentation_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    /// Slab test: the parameter interval `[t_enter, t_exit]` over which the
    /// ray is inside the box, clipped to `[0, t_max]`.
    pub fn ray_interval(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<(f64, f64)> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..3 {
            if dir[i] == 0.0 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let mut near = (self.min[i] - origin[i]) * inv;
            let mut far = (self.max[i] - origin[i]) * inv;
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Collision-enabled primitives of one environment plus their joint
/// bounding box. Collision checks and cameras both read this.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvScene {
    pub primitives: Vec<PlacedPrimitive>,
    pub aabb: Option<Aabb>,
    /// Per-primitive bounding-sphere radii, centered on each pose.
    pub(crate) radii: Vec<f64>,
}

impl EnvScene {
    pub fn new(primitives: Vec<PlacedPrimitive>) -> Self {
        let aabb = primitives
            .iter()
            .map(|p| p.primitive.aabb())
            .reduce(|a, b| a.union(&b));
        let radii = primitives.iter().map(|p| p.primitive.shape.bounding_radius()).collect();
        Self { primitives, aabb, radii }
    }

    /// Smallest distance from `p` to any primitive, or infinity when empty.
    pub fn distance(&self, p: &Vec3) -> f64 {
        self.primitives
            .iter()
            .map(|pp| pp.primitive.distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}
