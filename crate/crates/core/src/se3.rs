//! Rotation-group primitives used by the controllers, the integrator and the
//! asset/camera pose code.
//!
//! Conventions: right-handed, z-up world frame. Euler angles are intrinsic
//! Z-Y-X (yaw, pitch, roll), i.e. `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Absolute tolerance on `‖S + Sᵀ‖` accepted by [`vee`].
pub const SKEW_TOLERANCE: f64 = 1e-9;

/// Pitch distance from ±π/2 below which yaw extraction is flagged.
pub const GIMBAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum Se3Error {
    #[error("matrix is not skew-symmetric (‖S + Sᵀ‖ = {asymmetry:e})")]
    NotSkewSymmetric { asymmetry: f64 },
    #[error("yaw is ill-defined at pitch {pitch} rad (best effort {best_effort} rad)")]
    GimbalDegenerate { pitch: f64, best_effort: f64 },
}

/// A 3D rotation stored as a unit quaternion.
///
/// Every constructor and composition renormalizes, so the stored quaternion
/// stays unit-norm to machine precision over long integrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from quaternion components, normalizing them.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self(UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self(q).renormalized()
    }

    /// Builds a rotation from a proper orthogonal matrix.
    pub fn from_matrix(m: &Mat3) -> Self {
        let r = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Self(UnitQuaternion::from_rotation_matrix(&r)).renormalized()
    }

    /// Quaternion components as `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn matrix(&self) -> Mat3 {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// Composition `self * rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &Rotation) -> Self {
        Self(self.0 * rhs.0).renormalized()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0.transform_vector(v)
    }

    pub fn inverse_rotate(&self, v: &Vec3) -> Vec3 {
        self.0.inverse_transform_vector(v)
    }

    pub fn renormalized(self) -> Self {
        let mut q = self.0;
        q.renormalize();
        Self(q)
    }

    /// Geodesic angle to `other`, in `[0, π]`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.0.angle_to(&other.0)
    }
}

/// Skew-symmetric matrix such that `hat(w) * u == w × u`.
pub fn hat(w: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, -w.z, w.y, //
        w.z, 0.0, -w.x, //
        -w.y, w.x, 0.0,
    )
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds
/// [`SKEW_TOLERANCE`].
pub fn vee(s: &Mat3) -> Result<Vec3, Se3Error> {
    let asymmetry = (s + s.transpose()).norm();
    if !(asymmetry <= SKEW_TOLERANCE) {
        return Err(Se3Error::NotSkewSymmetric { asymmetry });
    }
    Ok(Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// `aᵀ * b`, accumulated in a fixed order so that `transpose_mul(b, a)` is
/// bitwise the transpose of `transpose_mul(a, b)`.
pub fn transpose_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    Mat3::from_fn(|i, j| a[(0, i)] * b[(0, j)] + a[(1, i)] * b[(1, j)] + a[(2, i)] * b[(2, j)])
}

fn axis_quat(axis: usize, angle: f64) -> Quaternion<f64> {
    let (s, c) = (0.5 * angle).sin_cos();
    match axis {
        0 => Quaternion::new(c, s, 0.0, 0.0),
        1 => Quaternion::new(c, 0.0, s, 0.0),
        _ => Quaternion::new(c, 0.0, 0.0, s),
    }
}

/// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rot_zyx(roll: f64, pitch: f64, yaw: f64) -> Rotation {
    let q = axis_quat(2, yaw) * axis_quat(1, pitch) * axis_quat(0, roll);
    Rotation(UnitQuaternion::new_normalize(q))
}

/// Standard right-handed rotation matrix about x.
pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// ZYX yaw, `atan2(R₂₁, R₁₁)`. Always returns a value; use [`yaw_checked`]
/// to learn whether it is meaningful.
pub fn yaw_of(r: &Rotation) -> f64 {
    let m = r.matrix();
    m[(1, 0)].atan2(m[(0, 0)])
}

/// Like [`yaw_of`] but reports gimbal lock (pitch within
/// [`GIMBAL_TOLERANCE`] of ±π/2) as an error carrying the best-effort yaw.
pub fn yaw_checked(r: &Rotation) -> Result<f64, Se3Error> {
    let (_, pitch, _) = euler_zyx(r);
    let yaw = yaw_of(r);
    if (std::f64::consts::FRAC_PI_2 - pitch.abs()) < GIMBAL_TOLERANCE {
        return Err(Se3Error::GimbalDegenerate {
            pitch,
            best_effort: yaw,
        });
    }
    Ok(yaw)
}

/// Inverse of [`rot_zyx`] for |pitch| < π/2: returns `(roll, pitch, yaw)`.
pub fn euler_zyx(r: &Rotation) -> (f64, f64, f64) {
    let m = r.matrix();
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    (roll, pitch, yaw)
}

/// Exponential map so(3) → SO(3) (Rodrigues), in quaternion form.
pub fn exp_so3(w: &Vec3) -> Rotation {
    let theta = w.norm();
    let (scalar, vector_scale) = if theta < 1e-8 {
        // second-order Taylor expansion of cos(θ/2) and sin(θ/2)/θ
        let t2 = theta * theta;
        (1.0 - t2 / 8.0, 0.5 - t2 / 48.0)
    } else {
        let half = 0.5 * theta;
        (half.cos(), half.sin() / theta)
    };
    let q = Quaternion::new(
        scalar,
        vector_scale * w.x,
        vector_scale * w.y,
        vector_scale * w.z,
    );
    Rotation(UnitQuaternion::new_normalize(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn assert_mat_close(a: &Mat3, b: &Mat3, tol: f64) {
        assert!((a - b).abs().max() <= tol, "{a} != {b}");
    }

    #[test]
    fn hat_zero_and_cross_identity() {
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
        assert_eq!(hat(&Vec3::x()) * Vec3::y(), Vec3::z());
        let w = Vec3::new(0.3, -1.2, 2.5);
        assert_eq!(vee(&hat(&w)).unwrap(), w);
    }

    #[test]
    fn vee_examples() {
        assert_eq!(vee(&Mat3::zeros()).unwrap(), Vec3::zeros());
        assert_eq!(vee(&hat(&Vec3::z())).unwrap(), Vec3::z());
        // direct evaluation of Rz(θ) - Rz(θ)ᵀ: off-diagonal entries ±2 sin θ
        let theta: f64 = 0.4;
        let rz = rot_z(theta);
        let v = vee(&(rz - rz.transpose())).unwrap() / 2.0;
        assert_relative_eq!(v, Vec3::new(0.0, 0.0, theta.sin()), epsilon = 1e-15);
    }

    #[test]
    fn vee_rejects_symmetric_part() {
        let mut s = hat(&Vec3::new(1.0, 2.0, 3.0));
        s[(0, 1)] += 1e-6;
        assert!(matches!(vee(&s), Err(Se3Error::NotSkewSymmetric { .. })));
    }

    #[test]
    fn rot_zyx_examples() {
        assert_mat_close(&rot_zyx(0.0, 0.0, 0.0).matrix(), &Mat3::identity(), 0.0);
        let v = rot_zyx(0.0, 0.0, FRAC_PI_2).rotate(&Vec3::x());
        assert_relative_eq!(v, Vec3::y(), epsilon = 1e-15);
        let expected = rot_z(0.3) * rot_y(0.2) * rot_x(0.1);
        assert_mat_close(&rot_zyx(0.1, 0.2, 0.3).matrix(), &expected, 1e-15);
    }

    #[test]
    fn yaw_examples() {
        assert_eq!(yaw_of(&Rotation::identity()), 0.0);
        assert_relative_eq!(yaw_of(&rot_zyx(0.1, 0.2, 0.7)), 0.7, epsilon = 1e-12);
        assert_relative_eq!(yaw_of(&rot_zyx(0.0, 0.0, -2.0)), -2.0, epsilon = 1e-12);
        assert!(yaw_checked(&rot_zyx(0.1, 0.2, 0.7)).is_ok());
    }

    #[test]
    fn yaw_flags_gimbal_lock() {
        let r = rot_zyx(0.0, FRAC_PI_2, 0.3);
        match yaw_checked(&r) {
            Err(Se3Error::GimbalDegenerate { best_effort, .. }) => assert!(best_effort.is_finite()),
            other => panic!("expected gimbal flag, got {other:?}"),
        }
    }

    #[test]
    fn exp_examples() {
        assert_eq!(exp_so3(&Vec3::zeros()), Rotation::identity());
        let a = exp_so3(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        assert!(a.angle_to(&rot_zyx(0.0, 0.0, FRAC_PI_2)) < 1e-12);
        let w = Vec3::new(0.2, -0.1, 0.5);
        let id = exp_so3(&w).compose(&exp_so3(&-w));
        assert!(id.angle_to(&Rotation::identity()) < 1e-12);
        // Taylor branch agrees with the closed form near the switch point
        let tiny = Vec3::new(3e-9, -4e-9, 1e-9);
        let m = exp_so3(&tiny).matrix();
        assert_mat_close(&m, &(Mat3::identity() + hat(&tiny)), 1e-16);
    }

    #[test]
    fn transpose_mul_is_exact_transpose() {
        let a = rot_zyx(0.3, -0.2, 1.1).matrix();
        let b = rot_zyx(-0.7, 0.4, -2.0).matrix();
        assert_eq!(transpose_mul(&a, &b), transpose_mul(&b, &a).transpose());
        assert_mat_close(&transpose_mul(&a, &b), &(a.transpose() * b), 1e-15);
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn vee_hat_roundtrip(w in vec3()) {
            let h = hat(&w);
            prop_assert_eq!(h, -h.transpose());
            prop_assert_eq!(vee(&h).unwrap(), w);
        }

        #[test]
        fn euler_roundtrip(
            roll in -PI + 0.01..PI - 0.01,
            pitch in -FRAC_PI_2 + 0.01..FRAC_PI_2 - 0.01,
            yaw in -PI + 0.01..PI - 0.01,
        ) {
            let (r, p, y) = euler_zyx(&rot_zyx(roll, pitch, yaw));
            prop_assert!((r - roll).abs() < 1e-9);
            prop_assert!((p - pitch).abs() < 1e-9);
            prop_assert!((y - yaw).abs() < 1e-9);
        }

        #[test]
        fn exp_output_is_a_rotation(w in vec3()) {
            let r = exp_so3(&w);
            let [qw, qx, qy, qz] = r.wxyz();
            prop_assert!(((qw * qw + qx * qx + qy * qy + qz * qz).sqrt() - 1.0).abs() < 1e-9);
            let m = r.matrix();
            prop_assert!((m.transpose() * m - Mat3::identity()).abs().max() < 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn yaw_inverse_composes_to_identity(yaw in -PI..PI) {
            let m = rot_zyx(0.0, 0.0, yaw).compose(&rot_zyx(0.0, 0.0, -yaw)).matrix();
            prop_assert!((m - Mat3::identity()).abs().max() < 1e-12);
        }
    }
}
