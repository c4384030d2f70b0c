use super::{coordinate_error_with, ErrorNorm, PgcError};
use crate::geometry::{PointCloud, Pose, StructuredLocNoise};
use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Per-point scene-coordinate predictions for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneCoordPrediction {
    /// Points in the agent frame.
    pub local_points: PointCloud,
    /// Predicted world coordinates, one per local point.
    pub predicted_world: PointCloud,
    /// Predicted per-point error magnitude (meters, >= 0).
    pub predicted_error: Vec<f64>,
    pub gt_world: Option<PointCloud>,
}

impl SceneCoordPrediction {
    pub fn len(&self) -> usize {
        self.local_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_points.is_empty()
    }

    pub fn validate(&self) -> Result<(), PgcError> {
        let n = self.local_points.len();
        if self.predicted_world.len() != n {
            return Err(PgcError::LengthMismatch(n, self.predicted_world.len()));
        }
        if self.predicted_error.len() != n {
            return Err(PgcError::LengthMismatch(n, self.predicted_error.len()));
        }
        if let Some(e) = self.predicted_error.iter().find(|e| !(**e >= 0.0)) {
            return Err(PgcError::NegativeError(*e));
        }
        Ok(())
    }
}

/// Synthetic stand-in for a trained scene-coordinate regressor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleErrorModel {
    pub noise: StructuredLocNoise,
    /// 1 makes the predicted error equal the true error; 0 makes it the
    /// model's uninformative expected error.
    pub error_prediction_fidelity: f64,
    pub norm: ErrorNorm,
}

impl Default for OracleErrorModel {
    fn default() -> Self {
        Self {
            noise: StructuredLocNoise::default(),
            error_prediction_fidelity: 0.8,
            norm: ErrorNorm::L1,
        }
    }
}

impl OracleErrorModel {
    pub fn noiseless() -> Self {
        Self {
            noise: StructuredLocNoise::zero(),
            error_prediction_fidelity: 1.0,
            norm: ErrorNorm::L1,
        }
    }

    pub fn validate(&self) -> Result<(), PgcError> {
        self.noise
            .validate()
            .map_err(|e| PgcError::InvalidConfig(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.error_prediction_fidelity) {
            return Err(PgcError::InvalidConfig(format!(
                "error_prediction_fidelity {} outside [0, 1]",
                self.error_prediction_fidelity
            )));
        }
        Ok(())
    }

    fn prior_error(&self) -> f64 {
        match self.norm {
            ErrorNorm::L1 => self.noise.expected_l1_error(),
            // E|N(0, s^2 I3)| = 2 s sqrt(2/pi); mean distance to the center of a cube of half-side a is ~0.9606 a.
            ErrorNorm::L2 => {
                let n = &self.noise;
                (1.0 - n.outlier_fraction) * 2.0 * n.inlier_sigma * (2.0 / std::f64::consts::PI).sqrt()
                    + n.outlier_fraction * 0.9606 * n.outlier_scale
            }
        }
    }
}

/// Produces scene-coordinate predictions for `cloud` observed from `gt_pose`.
pub fn oracle_predict<R: Rng + ?Sized>(
    cloud: &PointCloud,
    gt_pose: &Pose,
    model: &OracleErrorModel,
    rng: &mut R,
) -> Result<SceneCoordPrediction, PgcError> {
    if cloud.is_empty() {
        return Err(PgcError::EmptyCloud);
    }
    model.validate()?;
    let field = model.noise.realize(rng);
    let f = model.error_prediction_fidelity;
    let prior = model.prior_error();
    let n = cloud.len();
    let mut predicted = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n);
    let mut eps = Vec::with_capacity(n);
    for p in cloud.iter() {
        let y_gt = gt_pose.transform_point(p);
        let (e, _) = field.sample(&y_gt, rng);
        let y = y_gt + e;
        let u = coordinate_error_with(model.norm, &y, &y_gt);
        eps.push(f * u + (1.0 - f) * prior);
        predicted.push(y);
        gt.push(y_gt);
    }
    Ok(SceneCoordPrediction {
        local_points: cloud.clone(),
        predicted_world: PointCloud::new(predicted),
        predicted_error: eps,
        gt_world: Some(PointCloud::new(gt)),
    })
}

/// Replaces all points falling in the same cubic voxel by their centroid.
/// Output order follows the first point seen in each voxel.
pub fn rsd_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud, PgcError> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(PgcError::InvalidVoxel(voxel));
    }
    let mut slots: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut acc: Vec<(Vector3<f64>, usize)> = Vec::new();
    for p in cloud.iter() {
        let key = (
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        );
        let slot = *slots.entry(key).or_insert_with(|| {
            acc.push((Vector3::zeros(), 0));
            acc.len() - 1
        });
        acc[slot].0 += p;
        acc[slot].1 += 1;
    }
    Ok(acc.into_iter().map(|(s, c)| s / c as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_pose, seeded_rng};
    use std::collections::HashSet;

    fn cloud(seed: u64, n: usize, extent: f64) -> PointCloud {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent..extent),
                    rng.random_range(0.0..3.0),
                )
            })
            .collect()
    }

    #[test]
    fn zero_noise_is_exact() {
        let c = cloud(1, 200, 30.0);
        let pose = random_pose(&mut seeded_rng(2), 40.0);
        let pred = oracle_predict(&c, &pose, &OracleErrorModel::noiseless(), &mut seeded_rng(3)).unwrap();
        assert_eq!(pred.predicted_world, pred.gt_world.clone().unwrap());
        assert!(pred.predicted_error.iter().all(|&e| e == 0.0));
        pred.validate().unwrap();
    }

    #[test]
    fn full_fidelity_reports_true_error() {
        let c = cloud(4, 500, 30.0);
        let pose = random_pose(&mut seeded_rng(5), 40.0);
        let model = OracleErrorModel {
            error_prediction_fidelity: 1.0,
            ..Default::default()
        };
        let pred = oracle_predict(&c, &pose, &model, &mut seeded_rng(6)).unwrap();
        let gt = pred.gt_world.as_ref().unwrap();
        for i in 0..pred.len() {
            let u = crate::pgc::coordinate_error(&pred.predicted_world.points[i], &gt.points[i]);
            assert!((pred.predicted_error[i] - u).abs() < 1e-9);
        }
    }

    #[test]
    fn outlier_share_matches_fraction() {
        let c = cloud(7, 10_000, 30.0);
        let model = OracleErrorModel {
            noise: StructuredLocNoise {
                outlier_fraction: 0.3,
                ..Default::default()
            },
            ..Default::default()
        };
        let pred = oracle_predict(&c, &Pose::identity(), &model, &mut seeded_rng(8)).unwrap();
        let gt = pred.gt_world.as_ref().unwrap();
        // Inlier L1 error is ~N(0, 0.02) per axis; anything beyond 1 m is an outlier draw
        // (the chance a uniform 20 m outlier lands inside is ~1e-4).
        let count = (0..pred.len())
            .filter(|&i| crate::pgc::coordinate_error(&pred.predicted_world.points[i], &gt.points[i]) > 1.0)
            .count();
        let share = count as f64 / pred.len() as f64;
        assert!((share - 0.30).abs() <= 0.02, "share {share}");
    }

    #[test]
    fn empty_cloud_rejected() {
        let err = oracle_predict(&PointCloud::default(), &Pose::identity(), &OracleErrorModel::default(), &mut seeded_rng(0));
        assert_eq!(err.unwrap_err(), PgcError::EmptyCloud);
    }

    #[test]
    fn rsd_single_voxel_gives_centroid() {
        let c = PointCloud::new(vec![
            Vector3::new(0.1, 0.1, 0.1),
            Vector3::new(0.2, 0.05, 0.15),
            Vector3::new(0.15, 0.2, 0.05),
        ]);
        let d = rsd_downsample(&c, 0.5).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d.points[0] - c.centroid().unwrap()).norm() < 1e-15);
    }

    #[test]
    fn rsd_keeps_separated_points() {
        let pts: Vec<Vector3<f64>> = (0..5)
            .flat_map(|i| (0..5).map(move |j| Vector3::new(i as f64 + 0.5, j as f64 + 0.5, 0.5)))
            .collect();
        let c = PointCloud::new(pts);
        let d = rsd_downsample(&c, 1.0).unwrap();
        assert_eq!(d, c);
    }

    #[test]
    fn rsd_count_matches_independent_voxel_hash() {
        let c = cloud(9, 10_000, 10.0);
        let voxel = 0.5;
        let occupied: HashSet<[i64; 3]> = c
            .iter()
            .map(|p| {
                let mut k = [0i64; 3];
                for a in 0..3 {
                    k[a] = (p[a] / voxel).floor() as i64;
                }
                k
            })
            .collect();
        assert_eq!(rsd_downsample(&c, voxel).unwrap().len(), occupied.len());
        assert!(matches!(rsd_downsample(&c, 0.0), Err(PgcError::InvalidVoxel(_))));
        assert!(matches!(rsd_downsample(&c, -1.0), Err(PgcError::InvalidVoxel(_))));
    }
}
