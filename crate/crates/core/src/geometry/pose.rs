//! Rigid transforms in 3D and their planar (x, y, yaw) projection.

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wraps an angle into `(-pi, pi]`. An input landing exactly on `-pi` maps to `+pi`.
pub fn normalize_angle(theta: f64) -> f64 {
    if !theta.is_finite() {
        return theta;
    }
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Rotation about +z by `yaw` radians.
pub fn rot_z(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// A rigid transform `x -> R x + t`.
///
/// Composition follows the homogeneous-matrix convention: `a.compose(&b)`
/// applies `b` first, then `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    /// Yaw-only rotation followed by a translation.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self::new(rot_z(yaw), translation)
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self::new(rot.into_inner(), translation)
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Pose {
        Pose {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    /// Heading of the body x-axis projected on the ground plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// Drops z, roll and pitch.
    pub fn to_planar(&self) -> Pose2D {
        Pose2D::new(self.translation.x, self.translation.y, self.yaw())
    }

    /// `[R | t]` flattened row by row (12 values).
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    pub fn from_row_major(v: &[f64; 12]) -> Pose {
        Pose {
            rotation: Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]),
            translation: Vector3::new(v[3], v[7], v[11]),
        }
    }

    /// Maximum deviation of `RᵀR` from identity plus `|det R - 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.rotation.tr_mul(&self.rotation) - Matrix3::identity();
        m.amax() + (self.rotation.determinant() - 1.0).abs()
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().all(|v| v.is_finite()) && self.translation.iter().all(|v| v.is_finite())
    }
}

/// The transform mapping points expressed in agent `j`'s frame into agent `i`'s frame.
pub fn relative(pose_i: &Pose, pose_j: &Pose) -> Pose {
    pose_i.inverse().compose(pose_j)
}

/// Translation error in meters and geodesic rotation error in degrees.
pub fn pose_error(est: &Pose, gt: &Pose) -> (f64, f64) {
    let dt = (est.translation - gt.translation).norm();
    let m = gt.rotation.tr_mul(&est.rotation);
    let v = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    );
    // atan2(2 sin a, 2 cos a) stays accurate near zero, unlike acos.
    let angle = v.norm().atan2(m.trace() - 1.0);
    (dt, angle.to_degrees())
}

/// Planar pose `(x, y, theta)`; as a transform it maps `p -> R(theta) p + (x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.theta == 0.0
    }

    pub fn apply(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * px - s * py + self.x, s * px + c * py + self.y)
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }

    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (x, y) = self.apply(other.x, other.y);
        Pose2D::new(x, y, self.theta + other.theta)
    }

    pub fn to_pose(&self) -> Pose {
        Pose::from_yaw(self.theta, Vector3::new(self.x, self.y, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_pose, seeded_rng};

    fn homogeneous_close(a: &Matrix4<f64>, b: &Matrix4<f64>, tol: f64) -> bool {
        (a - b).amax() < tol
    }

    #[test]
    fn compose_identity() {
        let id = Pose::identity();
        assert_eq!(id.compose(&id), id);
    }

    #[test]
    fn compose_matches_matrix_product() {
        let a = Pose::from_yaw(PI / 2.0, Vector3::new(1.0, 0.0, 0.0));
        let b = Pose::from_yaw(PI / 2.0, Vector3::zeros());
        let c = a.compose(&b);
        let oracle = a.to_homogeneous() * b.to_homogeneous();
        assert!(homogeneous_close(&c.to_homogeneous(), &oracle, 1e-12));
        let expected = Pose::from_yaw(PI, Vector3::new(1.0, 0.0, 0.0));
        assert!(homogeneous_close(&c.to_homogeneous(), &expected.to_homogeneous(), 1e-12));
    }

    #[test]
    fn inverse_cases() {
        assert_eq!(Pose::identity().inverse(), Pose::identity());
        let p = Pose::from_translation(Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(p.inverse().translation, Vector3::new(-1.0, -2.0, -3.0));

        let mut rng = seeded_rng(11);
        for _ in 0..1000 {
            let p = random_pose(&mut rng, 50.0);
            let oracle = p.to_homogeneous().try_inverse().unwrap();
            assert!(homogeneous_close(&p.inverse().to_homogeneous(), &oracle, 1e-9));
            let e = p.compose(&p.inverse());
            assert!((e.rotation - Matrix3::identity()).norm() < 1e-9);
            assert!(e.translation.norm() < 1e-9);
        }
    }

    #[test]
    fn relative_round_trip_through_world() {
        assert_eq!(
            relative(&Pose::identity(), &Pose::from_yaw(0.3, Vector3::new(1.0, 2.0, 0.0))),
            Pose::from_yaw(0.3, Vector3::new(1.0, 2.0, 0.0))
        );
        let mut rng = seeded_rng(5);
        let pi = random_pose(&mut rng, 30.0);
        let pj = random_pose(&mut rng, 30.0);
        let rel = relative(&pi, &pj);
        let x_j = Vector3::new(3.0, -1.0, 0.5);
        let world = pj.transform_point(&x_j);
        let x_i = pi.inverse().transform_point(&world);
        assert!((rel.transform_point(&x_j) - x_i).norm() < 1e-9);
        let id = relative(&pi, &pi);
        assert!(id.orthonormality_error() < 1e-12);
        assert!((id.rotation - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn pose_error_cases() {
        let gt = Pose::from_yaw(0.7, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(pose_error(&gt, &gt), (0.0, 0.0));
        let est = Pose::new(gt.rotation, gt.translation + Vector3::new(3.0, 4.0, 0.0));
        assert_eq!(pose_error(&est, &gt).0, 5.0);
        let est = Pose::new(rot_z(10f64.to_radians()) * gt.rotation, gt.translation);
        assert!((pose_error(&est, &gt).1 - 10.0).abs() < 1e-6);
        // axis-angle oracle through nalgebra's rotation type
        let mut rng = seeded_rng(9);
        for _ in 0..100 {
            let a = random_pose(&mut rng, 1.0);
            let b = random_pose(&mut rng, 1.0);
            let rel = Rotation3::from_matrix_unchecked(b.rotation.transpose() * a.rotation);
            assert!((pose_error(&a, &b).1 - rel.angle().to_degrees()).abs() < 1e-6);
        }
    }

    #[test]
    fn angle_normalization() {
        assert_eq!(normalize_angle(-PI), PI);
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5 - 4.0 * PI) + 0.5).abs() < 1e-12);
        assert_eq!(Pose2D::new(0.0, 0.0, -PI).theta, PI);
    }

    #[test]
    fn planar_inverse_and_compose() {
        let p = Pose2D::new(1.5, -2.0, 0.4);
        let e = p.compose(&p.inverse());
        assert!(e.x.abs() < 1e-12 && e.y.abs() < 1e-12 && e.theta.abs() < 1e-12);
        let a = p.to_pose().compose(&Pose2D::new(0.3, 0.1, -1.0).to_pose()).to_planar();
        let b = p.compose(&Pose2D::new(0.3, 0.1, -1.0));
        assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12 && (a.theta - b.theta).abs() < 1e-12);
    }

    #[test]
    fn row_major_layout() {
        let p = Pose::from_yaw(0.2, Vector3::new(4.0, 5.0, 6.0));
        let v = p.to_row_major();
        assert_eq!(v[3], 4.0);
        assert_eq!(v[7], 5.0);
        assert_eq!(v[11], 6.0);
        assert_eq!(Pose::from_row_major(&v), p);
    }
}
