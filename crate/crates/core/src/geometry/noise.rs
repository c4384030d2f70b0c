//! Pose perturbation and localization-error models.

use super::{rot_z, GeometryError, Pose};
use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// I.i.d. Gaussian GNSS-style perturbation: `sigma_t` meters per planar axis,
/// `sigma_r` degrees of yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GaussianPoseNoise {
    pub sigma_t: f64,
    pub sigma_r: f64,
}

impl GaussianPoseNoise {
    pub fn new(sigma_t: f64, sigma_r: f64) -> Result<Self, GeometryError> {
        let n = Self { sigma_t, sigma_r };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.sigma_t >= 0.0 && self.sigma_r >= 0.0) {
            return Err(GeometryError::InvalidNoise(format!(
                "sigma_t={} sigma_r={} must both be >= 0",
                self.sigma_t, self.sigma_r
            )));
        }
        Ok(())
    }
}

/// Perturbs x, y and yaw. Exactly three standard-normal draws are consumed
/// regardless of the sigmas, so a fixed seed gives offsets that scale
/// linearly with the noise level.
pub fn perturb_pose<R: Rng + ?Sized>(pose: &Pose, noise: &GaussianPoseNoise, rng: &mut R) -> Pose {
    let zx: f64 = StandardNormal.sample(rng);
    let zy: f64 = StandardNormal.sample(rng);
    let zr: f64 = StandardNormal.sample(rng);
    if noise.sigma_t == 0.0 && noise.sigma_r == 0.0 {
        return *pose;
    }
    let dyaw = (zr * noise.sigma_r).to_radians();
    Pose {
        rotation: rot_z(dyaw) * pose.rotation,
        translation: pose.translation + Vector3::new(zx * noise.sigma_t, zy * noise.sigma_t, 0.0),
    }
}

/// Heavy-tailed, spatially structured localization error.
///
/// Each point is an outlier with probability `outlier_fraction` (uniform
/// error in `[-outlier_scale, outlier_scale]` per axis), otherwise Gaussian
/// with `inlier_sigma` per axis. A smooth bias field with the given
/// correlation length and amplitude is added on top of both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuredLocNoise {
    pub inlier_sigma: f64,
    pub outlier_fraction: f64,
    pub outlier_scale: f64,
    pub bias_correlation_length: f64,
    pub bias_amplitude: f64,
}

impl Default for StructuredLocNoise {
    fn default() -> Self {
        Self {
            inlier_sigma: 0.02,
            outlier_fraction: 0.3,
            outlier_scale: 20.0,
            bias_correlation_length: 10.0,
            bias_amplitude: 0.0,
        }
    }
}

const BIAS_FEATURES: usize = 16;

impl StructuredLocNoise {
    pub fn zero() -> Self {
        Self {
            inlier_sigma: 0.0,
            outlier_fraction: 0.0,
            outlier_scale: 0.0,
            bias_correlation_length: 0.0,
            bias_amplitude: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = (0.0..=1.0).contains(&self.outlier_fraction)
            && self.inlier_sigma >= 0.0
            && self.outlier_scale >= 0.0
            && self.bias_correlation_length >= 0.0
            && self.bias_amplitude >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidNoise(format!("{self:?}")))
        }
    }

    /// Expected L1 magnitude of the per-point error, ignoring the bias field.
    pub fn expected_l1_error(&self) -> f64 {
        let inlier = 3.0 * self.inlier_sigma * (2.0 / std::f64::consts::PI).sqrt();
        let outlier = 1.5 * self.outlier_scale;
        (1.0 - self.outlier_fraction) * inlier + self.outlier_fraction * outlier
    }

    /// Draws one realisation of the bias field; per-point draws come from [`NoiseField::sample`].
    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseField {
        let mut features = Vec::new();
        if self.bias_amplitude > 0.0 && self.bias_correlation_length > 0.0 {
            let inv_len = 1.0 / self.bias_correlation_length;
            for _axis in 0..3 {
                let axis_feats: Vec<(Vector2<f64>, f64)> = (0..BIAS_FEATURES)
                    .map(|_| {
                        let wx: f64 = StandardNormal.sample(rng);
                        let wy: f64 = StandardNormal.sample(rng);
                        let phase = rng.random_range(0.0..std::f64::consts::TAU);
                        (Vector2::new(wx * inv_len, wy * inv_len), phase)
                    })
                    .collect();
                features.push(axis_feats);
            }
        }
        NoiseField {
            model: *self,
            features,
        }
    }
}

/// One drawn bias field plus the per-point mixture model.
#[derive(Debug, Clone)]
pub struct NoiseField {
    model: StructuredLocNoise,
    features: Vec<Vec<(Vector2<f64>, f64)>>,
}

impl NoiseField {
    /// Smooth bias at a world position (random Fourier features of a squared-exponential kernel).
    pub fn bias(&self, p: &Vector3<f64>) -> Vector3<f64> {
        if self.features.is_empty() {
            return Vector3::zeros();
        }
        let scale = self.model.bias_amplitude * (2.0 / BIAS_FEATURES as f64).sqrt();
        let xy = Vector2::new(p.x, p.y);
        let mut out = Vector3::zeros();
        for (axis, feats) in self.features.iter().enumerate() {
            out[axis] = scale * feats.iter().map(|(w, ph)| (w.dot(&xy) + ph).cos()).sum::<f64>();
        }
        out
    }

    /// Error vector for a point at world position `p`, and whether it was drawn as an outlier.
    pub fn sample<R: Rng + ?Sized>(&self, p: &Vector3<f64>, rng: &mut R) -> (Vector3<f64>, bool) {
        let m = &self.model;
        let u: f64 = rng.random();
        let outlier = u < m.outlier_fraction;
        let mut e = Vector3::zeros();
        for axis in 0..3 {
            e[axis] = if outlier {
                (rng.random::<f64>() * 2.0 - 1.0) * m.outlier_scale
            } else {
                let z: f64 = StandardNormal.sample(rng);
                z * m.inlier_sigma
            };
        }
        (e + self.bias(p), outlier)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pose_error, random_pose, seeded_rng};

    #[test]
    fn zero_noise_is_identity() {
        let mut rng = seeded_rng(4);
        for _ in 0..50 {
            let p = random_pose(&mut rng, 10.0);
            assert_eq!(perturb_pose(&p, &GaussianPoseNoise::default(), &mut rng), p);
        }
    }

    #[test]
    fn perturbation_is_deterministic() {
        let p = Pose::from_yaw(0.2, Vector3::new(1.0, 2.0, 0.0));
        let n = GaussianPoseNoise::new(1.0, 1.0).unwrap();
        let a = perturb_pose(&p, &n, &mut seeded_rng(99));
        let b = perturb_pose(&p, &n, &mut seeded_rng(99));
        assert_eq!(a, b);
        assert_ne!(a, p);
    }

    #[test]
    fn perturbation_std_matches_sigma() {
        let p = Pose::identity();
        let n = GaussianPoseNoise::new(1.0, 0.0).unwrap();
        let mut rng = seeded_rng(1234);
        let xs: Vec<f64> = (0..10_000).map(|_| perturb_pose(&p, &n, &mut rng).translation.x).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((var.sqrt() - 1.0).abs() < 0.05, "std {}", var.sqrt());
    }

    #[test]
    fn perturbation_is_yaw_only() {
        let p = Pose::from_yaw(0.4, Vector3::new(5.0, 1.0, 2.0));
        let q = perturb_pose(&p, &GaussianPoseNoise::new(2.0, 3.0).unwrap(), &mut seeded_rng(8));
        assert_eq!(q.translation.z, 2.0);
        assert!((q.rotation[(2, 2)] - 1.0).abs() < 1e-12);
        assert!(pose_error(&q, &p).1 > 0.0);
    }

    #[test]
    fn noise_parameters_are_validated() {
        assert!(GaussianPoseNoise::new(-1.0, 0.0).is_err());
        let bad = StructuredLocNoise {
            outlier_fraction: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(StructuredLocNoise::default().validate().is_ok());
    }

    #[test]
    fn bias_field_is_smooth_and_bounded() {
        let model = StructuredLocNoise {
            bias_amplitude: 0.5,
            bias_correlation_length: 20.0,
            ..StructuredLocNoise::zero()
        };
        let field = model.realize(&mut seeded_rng(3));
        let a = field.bias(&Vector3::new(0.0, 0.0, 0.0));
        let b = field.bias(&Vector3::new(0.1, 0.0, 0.0));
        assert!((a - b).norm() < 0.05);
        assert!(a.norm() > 0.0);
        let zero = StructuredLocNoise::zero().realize(&mut seeded_rng(3));
        assert_eq!(zero.bias(&Vector3::new(5.0, 5.0, 0.0)), Vector3::zeros());
    }
}
