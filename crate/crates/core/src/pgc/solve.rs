use super::PgcError;
use crate::geometry::{PointCloud, Pose};
use nalgebra::{Matrix3, Vector3};

/// Relative size of the second principal variance below which a point set
/// counts as collinear.
const COLLINEAR_TOL: f64 = 1e-10;

/// Least-squares rigid transform `(R, t)` minimizing `sum |R x_i + t - y_i|^2`,
/// with `det R = +1`.
pub fn kabsch_solve(local: &PointCloud, world: &PointCloud) -> Result<Pose, PgcError> {
    kabsch_points(&local.points, &world.points)
}

pub(crate) fn kabsch_points(local: &[Vector3<f64>], world: &[Vector3<f64>]) -> Result<Pose, PgcError> {
    if local.len() != world.len() {
        return Err(PgcError::LengthMismatch(local.len(), world.len()));
    }
    if local.len() < 3 {
        return Err(PgcError::DegenerateSample);
    }
    let n = local.len() as f64;
    let cx = local.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let cy = world.iter().fold(Vector3::zeros(), |a, p| a + p) / n;

    let mut cov = Matrix3::zeros();
    let mut h = Matrix3::zeros();
    for (x, y) in local.iter().zip(world) {
        let dx = x - cx;
        cov += dx * dx.transpose();
        h += dx * (y - cy).transpose();
    }
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= COLLINEAR_TOL * ev[0] {
        return Err(PgcError::DegenerateSample);
    }

    let svd = h.svd(true, true);
    let u = svd.u.ok_or(PgcError::DegenerateSample)?;
    let v = svd.v_t.ok_or(PgcError::DegenerateSample)?.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rot = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let t = cy - rot * cx;
    Ok(Pose::new(rot, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_pose, seeded_rng, transform_points};
    use rand::Rng;

    fn random_cloud(seed: u64, n: usize) -> PointCloud {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-3.0..3.0)))
            .collect()
    }

    #[test]
    fn identity_on_equal_sets() {
        let c = random_cloud(1, 30);
        let p = kabsch_solve(&c, &c).unwrap();
        assert!((p.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(p.translation.amax() < 1e-12);
    }

    #[test]
    fn recovers_constructed_transform() {
        let c = random_cloud(2, 25);
        let gt = Pose::from_yaw(std::f64::consts::FRAC_PI_2, Vector3::new(1.0, 2.0, 0.0));
        let p = kabsch_solve(&c, &transform_points(&gt, &c)).unwrap();
        assert!((p.rotation - gt.rotation).amax() < 1e-9);
        assert!((p.translation - gt.translation).amax() < 1e-9);
    }

    #[test]
    fn recovers_random_transforms() {
        let mut rng = seeded_rng(77);
        for k in 0..100 {
            let c = random_cloud(100 + k, 3 + (k as usize % 20));
            let gt = random_pose(&mut rng, 100.0);
            let p = kabsch_solve(&c, &transform_points(&gt, &c)).unwrap();
            assert!((p.rotation - gt.rotation).amax() < 1e-9, "case {k}");
            assert!((p.translation - gt.translation).amax() < 1e-9, "case {k}");
            assert!((p.rotation.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_is_corrected() {
        let c = random_cloud(3, 10);
        let mirrored: PointCloud = c.iter().map(|p| Vector3::new(p.x, p.y, -p.z)).collect();
        let p = kabsch_solve(&c, &mirrored).unwrap();
        assert!((p.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let line = PointCloud::new(vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 1.0), Vector3::new(2.0, 2.0, 2.0)]);
        assert_eq!(kabsch_solve(&line, &line), Err(PgcError::DegenerateSample));
        let two = PointCloud::new(line.points[..2].to_vec());
        assert_eq!(kabsch_solve(&two, &two), Err(PgcError::DegenerateSample));
        assert_eq!(kabsch_solve(&line, &two), Err(PgcError::LengthMismatch(3, 2)));
    }
}
