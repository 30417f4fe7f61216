//! Ray-cast depth and segmentation cameras.
//!
//! Pinhole model with square pixels. The camera frame looks along its +x
//! axis with +y to the left and +z up, matching the body frame. Pixel
//! `(u, v)` (column, row) casts a ray through its center. Depth is the
//! Euclidean distance along the ray, not the z-depth; pixels that hit
//! nothing within `max_range` read exactly `max_range` with segmentation 0.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::CameraConfig;
use crate::geometry::{EnvScene, Pose, Primitive, Shape};
use crate::rng::uniform;
use crate::se3::{rot_zyx, Vec3};

/// Magic bytes at the start of a depth dump.
pub const DUMP_MAGIC: [u8; 8] = *b"DEPTHSEG";
/// `dtype` tag: f32 depth followed by u32 segmentation.
pub const DUMP_DTYPE_F32_U32: u32 = 1;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a depth dump (bad magic)")]
    BadMagic,
    #[error("unsupported dump dtype {0}")]
    BadDtype(u32),
    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
}

/// Smallest positive hit distance of a unit-direction ray against `prim`,
/// if it lies within `max_range`. A ray tangent to a curved surface counts
/// as a hit.
pub fn ray_primitive(origin: &Vec3, dir: &Vec3, prim: &Primitive, max_range: f64) -> Option<f64> {
    let o = prim.pose.inverse_transform_point(origin);
    let d = prim.pose.rotation.inverse_rotate(dir);
    let (enter, exit) = match prim.shape {
        Shape::Sphere { radius } => {
            let b = o.dot(&d);
            let c = o.dot(&o) - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let s = disc.sqrt();
            (-b - s, -b + s)
        }
        Shape::Box { size } => slab(&o, &d, &(size * 0.5), 3)?,
        Shape::Cylinder { radius, length } => {
            let (z0, z1) = slab(&o, &d, &Vec3::new(0.0, 0.0, 0.5 * length), 2)?;
            let a = d.x * d.x + d.y * d.y;
            let c = o.x * o.x + o.y * o.y - radius * radius;
            let (r0, r1) = if a == 0.0 {
                if c > 0.0 {
                    return None;
                }
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                let b = o.x * d.x + o.y * d.y;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                ((-b - s) / a, (-b + s) / a)
            };
            let (t0, t1) = (r0.max(z0), r1.min(z1));
            if t0 > t1 {
                return None;
            }
            (t0, t1)
        }
    };
    let t = if enter > 0.0 { enter } else { exit };
    (t > 0.0 && t <= max_range).then_some(t)
}

/// Slab intersection against the centered box with half extents `half`,
/// using only the last `axes` axes counted from z when `axes < 3`.
fn slab(o: &Vec3, d: &Vec3, half: &Vec3, axes: usize) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let first = if axes == 3 { 0 } else { 2 };
    for i in first..3 {
        if d[i] == 0.0 {
            if o[i].abs() > half[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[i];
        let a = (-half[i] - o[i]) * inv;
        let b = (half[i] - o[i]) * inv;
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Nearest hit over every primitive of a scene: `(t, segmentation id)`.
pub fn cast(scene: &EnvScene, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<(f64, u32)> {
    let (_, exit) = scene.aabb?.ray_interval(origin, dir, max_range)?;
    let mut best: Option<(f64, u32)> = None;
    for (p, radius) in scene.primitives.iter().zip(&scene.radii) {
        let limit = best.map_or(exit, |(t, _)| t);
        // bounding-sphere reject, padded against rounding
        let r = radius * (1.0 + 1e-9) + 1e-9;
        let oc = p.primitive.pose.translation - origin;
        let along = oc.dot(dir);
        if along + r < 0.0 || along - r > limit || oc.norm_squared() - along * along > r * r {
            continue;
        }
        if let Some(t) = ray_primitive(origin, dir, &p.primitive, limit) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, p.segmentation_id));
            }
        }
    }
    best
}

/// Unit ray directions in the camera frame, row-major.
pub fn pixel_directions(cfg: &CameraConfig) -> Vec<Vec3> {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let focal = 0.5 * w / (0.5 * cfg.hfov).tan();
    let mut dirs = Vec::with_capacity((cfg.width * cfg.height) as usize);
    for v in 0..cfg.height {
        for u in 0..cfg.width {
            let x = u as f64 + 0.5 - 0.5 * w;
            let y = v as f64 + 0.5 - 0.5 * h;
            dirs.push(Vec3::new(focal, -x, -y).normalize());
        }
    }
    dirs
}

/// Vertical field of view implied by square pixels.
pub fn vertical_fov(cfg: &CameraConfig) -> f64 {
    let focal = 0.5 * cfg.width as f64 / (0.5 * cfg.hfov).tan();
    2.0 * (0.5 * cfg.height as f64 / focal).atan()
}

/// Depth and segmentation images for a batch of cameras, stored as one
/// contiguous `[n, height, width]` tensor each.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBatch {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub depth: Vec<f32>,
    pub segmentation: Vec<u32>,
}

impl DepthBatch {
    pub fn new(count: usize, height: usize, width: usize) -> Self {
        Self {
            count,
            height,
            width,
            depth: vec![0.0; count * height * width],
            segmentation: vec![0; count * height * width],
        }
    }

    fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn depth_image(&self, i: usize) -> &[f32] {
        &self.depth[i * self.pixels()..(i + 1) * self.pixels()]
    }

    pub fn segmentation_image(&self, i: usize) -> &[u32] {
        &self.segmentation[i * self.pixels()..(i + 1) * self.pixels()]
    }

    pub fn depth_at(&self, i: usize, row: usize, col: usize) -> f32 {
        self.depth[i * self.pixels() + row * self.width + col]
    }

    pub fn segmentation_at(&self, i: usize, row: usize, col: usize) -> u32 {
        self.segmentation[i * self.pixels() + row * self.width + col]
    }

    /// FNV-1a over the raw depth bits and segmentation ids.
    pub fn checksum(&self) -> u64 {
        let mut h = crate::bench::Fnv1a::default();
        for d in &self.depth {
            h.write_u32(d.to_bits());
        }
        for s in &self.segmentation {
            h.write_u32(*s);
        }
        h.finish()
    }

    /// Binary dump: magic, then `count`, `height`, `width` and `dtype` as
    /// little-endian u32, then the depth array (f32) and the segmentation
    /// array (u32), both little-endian.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<(), SensorError> {
        w.write_all(&DUMP_MAGIC)?;
        for v in [self.count, self.height, self.width] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&DUMP_DTYPE_F32_U32.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.depth.len() * 8);
        for d in &self.depth {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for s in &self.segmentation {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self, SensorError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if magic != DUMP_MAGIC {
            return Err(SensorError::BadMagic);
        }
        let mut word = [0u8; 4];
        let mut header = [0u32; 4];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = u32::from_le_bytes(word);
        }
        let [count, height, width, dtype] = header;
        if dtype != DUMP_DTYPE_F32_U32 {
            return Err(SensorError::BadDtype(dtype));
        }
        let mut batch = Self::new(count as usize, height as usize, width as usize);
        for d in batch.depth.iter_mut() {
            r.read_exact(&mut word)?;
            *d = f32::from_le_bytes(word);
        }
        for s in batch.segmentation.iter_mut() {
            r.read_exact(&mut word)?;
            *s = u32::from_le_bytes(word);
        }
        Ok(batch)
    }

    /// 16-bit grayscale PNG of image `i`, depth scaled so `max_range` is white.
    pub fn save_png(&self, i: usize, max_range: f32, path: &std::path::Path) -> Result<(), SensorError> {
        let pixels: Vec<u16> = self
            .depth_image(i)
            .iter()
            .map(|d| ((d / max_range).clamp(0.0, 1.0) * u16::MAX as f32).round() as u16)
            .collect();
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(self.width as u32, self.height as u32, pixels)
            .expect("buffer matches dimensions");
        img.save(path)?;
        Ok(())
    }
}

/// Renders one view into the given image slices.
pub fn render_view(
    camera: &Pose,
    scene: &EnvScene,
    dirs: &[Vec3],
    max_range: f64,
    depth: &mut [f32],
    segmentation: &mut [u32],
) {
    let origin = camera.translation;
    for ((dir, d), s) in dirs.iter().zip(depth.iter_mut()).zip(segmentation.iter_mut()) {
        let world_dir = camera.rotation.rotate(dir);
        match cast(scene, &origin, &world_dir, max_range) {
            Some((t, id)) => {
                *d = t as f32;
                *s = id;
            }
            None => {
                *d = max_range as f32;
                *s = 0;
            }
        }
    }
}

/// Renders one image per camera into `out`, in parallel over cameras and
/// rows. `cameras[i]` looks into `scenes[i]`.
pub fn render_into(cameras: &[Pose], scenes: &[&EnvScene], cfg: &CameraConfig, out: &mut DepthBatch) {
    assert_eq!(cameras.len(), scenes.len());
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    if out.count != cameras.len() || out.width != w || out.height != h {
        *out = DepthBatch::new(cameras.len(), h, w);
    }
    let dirs = pixel_directions(cfg);
    out.depth
        .par_chunks_mut(w)
        .zip(out.segmentation.par_chunks_mut(w))
        .enumerate()
        .for_each(|(row_index, (d, s))| {
            let (cam, row) = (row_index / h, row_index % h);
            render_view(&cameras[cam], scenes[cam], &dirs[row * w..(row + 1) * w], cfg.max_range, d, s);
        });
}

pub fn render(cameras: &[Pose], scenes: &[&EnvScene], cfg: &CameraConfig) -> DepthBatch {
    let mut out = DepthBatch::new(cameras.len(), cfg.height as usize, cfg.width as usize);
    render_into(cameras, scenes, cfg, &mut out);
    out
}

/// Draws a mount pose uniformly within the configured half-widths around
/// the nominal mount.
pub fn randomize_mount<R: Rng>(cfg: &CameraConfig, rng: &mut R) -> Pose {
    let nominal = cfg.nominal_mount();
    let zero = cfg.randomize_position.iter().chain(cfg.randomize_euler.iter()).all(|b| *b == 0.0);
    if zero {
        return nominal;
    }
    let dp = Vec3::from_fn(|i, _| uniform(rng, -cfg.randomize_position[i], cfg.randomize_position[i]));
    let de = Vec3::from_fn(|i, _| uniform(rng, -cfg.randomize_euler[i], cfg.randomize_euler[i]));
    Pose::new(
        nominal.translation + dp,
        nominal.rotation.compose(&rot_zyx(de.x, de.y, de.z)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PlacedPrimitive;
    use crate::rng::{env_stream, Purpose};
    use crate::se3::Rotation;

    fn at(shape: Shape, center: Vec3) -> Primitive {
        Primitive { shape, pose: Pose::from_translation(center) }
    }

    fn scene(prims: &[(Primitive, u32)]) -> EnvScene {
        EnvScene::new(
            prims
                .iter()
                .map(|(p, id)| PlacedPrimitive { primitive: *p, segmentation_id: *id })
                .collect(),
        )
    }

    #[test]
    fn analytic_hits() {
        let o = Vec3::new(-5.0, 0.0, 0.0);
        let x = Vec3::x();
        let sphere = at(Shape::Sphere { radius: 1.0 }, Vec3::zeros());
        assert_eq!(ray_primitive(&o, &x, &sphere, 100.0), Some(4.0));
        let cube = at(Shape::Box { size: Vec3::repeat(1.0) }, Vec3::zeros());
        assert_eq!(ray_primitive(&o, &x, &cube, 100.0), Some(4.5));
        let cyl = at(Shape::Cylinder { radius: 0.5, length: 2.0 }, Vec3::zeros());
        assert_eq!(ray_primitive(&o, &x, &cyl, 100.0), Some(4.5));
        // along the axis: hits the cap
        assert_eq!(ray_primitive(&Vec3::new(0.0, 0.0, -5.0), &Vec3::z(), &cyl, 100.0), Some(4.0));
        assert_eq!(ray_primitive(&o, &x, &sphere, 3.9), None);
        assert_eq!(ray_primitive(&o, &-x, &sphere, 100.0), None);
    }

    #[test]
    fn tangent_ray_counts_as_hit() {
        // b = -5, c = 25 → discriminant exactly 0, tangent point at x = 0
        let sphere = at(Shape::Sphere { radius: 1.0 }, Vec3::zeros());
        let o = Vec3::new(-5.0, 1.0, 0.0);
        assert_eq!(ray_primitive(&o, &Vec3::x(), &sphere, 100.0), Some(5.0));
        let o = Vec3::new(-5.0, 1.0 + 1e-9, 0.0);
        assert_eq!(ray_primitive(&o, &Vec3::x(), &sphere, 100.0), None);
    }

    #[test]
    fn origin_inside_reports_exit() {
        let cube = at(Shape::Box { size: Vec3::repeat(2.0) }, Vec3::zeros());
        assert_eq!(ray_primitive(&Vec3::zeros(), &Vec3::x(), &cube, 100.0), Some(1.0));
    }

    #[test]
    fn rotated_cylinder() {
        let cyl = Primitive {
            shape: Shape::Cylinder { radius: 0.5, length: 4.0 },
            pose: Pose::new(Vec3::new(3.0, 0.0, 0.0), rot_zyx(0.0, std::f64::consts::FRAC_PI_2, 0.0)),
        };
        // axis along world x: the ray along x enters through the cap at x = 1
        assert_eq!(ray_primitive(&Vec3::zeros(), &Vec3::x(), &cyl, 100.0).map(|t| (t * 1e9).round() / 1e9), Some(1.0));
    }

    #[test]
    fn empty_scene_reads_max_range() {
        let cfg = CameraConfig { width: 8, height: 6, ..CameraConfig::default() };
        let empty = EnvScene::default();
        let img = render(&[Pose::default()], &[&empty], &cfg);
        assert!(img.depth.iter().all(|d| *d == 10.0));
        assert!(img.segmentation.iter().all(|s| *s == 0));
    }

    #[test]
    fn nearest_primitive_wins() {
        let s = scene(&[
            (at(Shape::Sphere { radius: 1.0 }, Vec3::new(8.0, 0.0, 0.0)), 1),
            (at(Shape::Sphere { radius: 1.0 }, Vec3::new(5.0, 0.0, 0.0)), 2),
        ]);
        assert_eq!(cast(&s, &Vec3::zeros(), &Vec3::x(), 10.0), Some((4.0, 2)));
    }

    #[test]
    fn pixel_geometry() {
        let cfg = CameraConfig { width: 5, height: 3, hfov: std::f64::consts::FRAC_PI_2, ..CameraConfig::default() };
        let dirs = pixel_directions(&cfg);
        assert_eq!(dirs[7], Vec3::x());
        // first column center: 2 px left of the axis, focal length 2.5 px
        let left = dirs[5];
        let expected = 2.0f64.atan2(2.5);
        assert!((left.y.atan2(left.x) - expected).abs() < 1e-12);
        assert!(dirs[2].z > 0.0, "row 0 looks up");
        assert!((vertical_fov(&cfg) - 2.0 * (1.5f64 / 2.5).atan()).abs() < 1e-12);
    }

    #[test]
    fn dump_roundtrip_and_header() {
        let s = scene(&[(at(Shape::Sphere { radius: 1.0 }, Vec3::new(4.0, 0.0, 0.0)), 3)]);
        let cfg = CameraConfig { width: 7, height: 5, ..CameraConfig::default() };
        let img = render(&[Pose::default(), Pose::default()], &[&s, &s], &cfg);
        let mut bytes = Vec::new();
        img.write_dump(&mut bytes).unwrap();
        assert_eq!(&bytes[..8], b"DEPTHSEG");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 7);
        assert_eq!(bytes.len(), 24 + 2 * 35 * 8);
        assert_eq!(DepthBatch::read_dump(bytes.as_slice()).unwrap(), img);
        bytes[0] = b'X';
        assert!(matches!(DepthBatch::read_dump(bytes.as_slice()), Err(SensorError::BadMagic)));
    }

    #[test]
    fn png_export() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = CameraConfig { width: 4, height: 3, ..CameraConfig::default() };
        let img = render(&[Pose::default()], &[&EnvScene::default()], &cfg);
        let path = tmp.path().join("d.png");
        img.save_png(0, 10.0, &path).unwrap();
        let back = image::open(&path).unwrap().into_luma16();
        assert_eq!(back.dimensions(), (4, 3));
        assert!(back.pixels().all(|p| p.0[0] == u16::MAX));
    }

    #[test]
    fn mount_randomization() {
        let cfg = CameraConfig::default();
        let mut rng = env_stream(0, 0, 0, Purpose::CameraMount);
        assert_eq!(randomize_mount(&cfg, &mut rng), cfg.nominal_mount());

        let cfg = CameraConfig { randomize_position: Vec3::repeat(0.01), randomize_euler: Vec3::repeat(0.05), ..CameraConfig::default() };
        for _ in 0..200 {
            let m = randomize_mount(&cfg, &mut rng);
            let dp = m.translation - cfg.mount_position;
            assert!(dp.iter().all(|v| v.abs() <= 0.01));
            assert!(m.rotation.angle_to(&Rotation::identity()) <= 0.05 * 3f64.sqrt() + 1e-12);
        }
        let a = randomize_mount(&cfg, &mut env_stream(3, 1, 0, Purpose::CameraMount));
        let b = randomize_mount(&cfg, &mut env_stream(3, 1, 0, Purpose::CameraMount));
        assert_eq!(a, b);
    }
}
