use super::BaselineError;
use crate::geometry::{PointCloud, Pose};
use crate::pgc::kabsch_points;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once both the translation step (m) and rotation step (rad) fall below this.
    pub convergence_eps: f64,
    pub max_correspondence_dist: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_eps: 1e-6,
            max_correspondence_dist: 2.0,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.max_iterations == 0 || !(self.convergence_eps > 0.0) || !(self.max_correspondence_dist > 0.0) {
            return Err(BaselineError::InvalidConfig("ICP parameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps source points into the destination frame.
    pub pose: Pose,
    pub final_rmse: f64,
    pub iterations: usize,
    /// RMSE of the matched pairs at the start of each iteration, then at the final pose.
    pub rmse_history: Vec<f64>,
}

struct SpatialHash<'a> {
    cell: f64,
    points: &'a [Vector3<f64>],
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> SpatialHash<'a> {
    fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { cell, points, buckets }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> [i64; 3] {
        [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
    }

    /// Nearest point within `cell` of `q`; the lowest index wins ties.
    fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        let k = Self::key(q, self.cell);
        let mut best: Option<(usize, f64)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                        continue;
                    };
                    for &i in bucket {
                        let d2 = (self.points[i] - q).norm_squared();
                        let better = match best {
                            None => true,
                            Some((bi, bd)) => d2 < bd || (d2 == bd && i < bi),
                        };
                        if better {
                            best = Some((i, d2));
                        }
                    }
                }
            }
        }
        best.filter(|&(_, d2)| d2 <= self.cell * self.cell)
    }
}

/// Matched `(src index, dst index)` pairs and their RMSE under `pose`.
fn correspond(src: &[Vector3<f64>], index: &SpatialHash, pose: &Pose) -> (Vec<(usize, usize)>, f64) {
    let mut pairs = Vec::new();
    let mut sq = 0.0;
    for (i, p) in src.iter().enumerate() {
        if let Some((j, d2)) = index.nearest(&pose.transform_point(p)) {
            pairs.push((i, j));
            sq += d2;
        }
    }
    let rmse = if pairs.is_empty() { f64::INFINITY } else { (sq / pairs.len() as f64).sqrt() };
    (pairs, rmse)
}

fn step_size(a: &Pose, b: &Pose) -> f64 {
    let (dt, dr) = crate::geometry::pose_error(a, b);
    dt.max(dr.to_radians())
}

pub fn icp_align(src: &PointCloud, dst: &PointCloud, cfg: &IcpConfig) -> Result<IcpResult, BaselineError> {
    icp_align_from(src, dst, cfg, &Pose::identity())
}

/// Point-to-point ICP starting from `init`.
pub fn icp_align_from(
    src: &PointCloud,
    dst: &PointCloud,
    cfg: &IcpConfig,
    init: &Pose,
) -> Result<IcpResult, BaselineError> {
    cfg.validate()?;
    if src.is_empty() || dst.is_empty() {
        return Err(BaselineError::EmptyCloud);
    }
    let index = SpatialHash::new(&dst.points, cfg.max_correspondence_dist);
    let mut pose = *init;
    let mut history = Vec::new();
    for it in 1..=cfg.max_iterations {
        let (pairs, rmse) = correspond(&src.points, &index, &pose);
        if pairs.len() < 3 {
            return Err(BaselineError::NoCorrespondences(cfg.max_correspondence_dist));
        }
        history.push(rmse);
        if rmse == 0.0 {
            return Ok(IcpResult {
                pose,
                final_rmse: 0.0,
                iterations: it,
                rmse_history: history,
            });
        }
        let a: Vec<_> = pairs.iter().map(|&(i, _)| src.points[i]).collect();
        let b: Vec<_> = pairs.iter().map(|&(_, j)| dst.points[j]).collect();
        let next = kabsch_points(&a, &b).map_err(|_| BaselineError::Degenerate)?;
        let step = step_size(&pose, &next);
        pose = next;
        if step < cfg.convergence_eps || it == cfg.max_iterations {
            let (pairs, rmse) = correspond(&src.points, &index, &pose);
            if pairs.is_empty() {
                return Err(BaselineError::NoCorrespondences(cfg.max_correspondence_dist));
            }
            history.push(rmse);
            return Ok(IcpResult {
                pose,
                final_rmse: rmse,
                iterations: it,
                rmse_history: history,
            });
        }
    }
    unreachable!("loop returns on its last iteration")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pose_error, seeded_rng, transform_points};
    use rand::Rng;

    fn blob(seed: u64, n: usize) -> PointCloud {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(0.0..2.0),
                )
            })
            .collect()
    }

    #[test]
    fn identical_clouds_converge_immediately() {
        let c = blob(1, 300);
        let r = icp_align(&c, &c, &IcpConfig::default()).unwrap();
        assert_eq!(r.pose, Pose::identity());
        assert_eq!(r.final_rmse, 0.0);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn recovers_small_translation() {
        let src = blob(2, 2000);
        let t = Pose::from_translation(Vector3::new(0.3, 0.0, 0.0));
        let dst = transform_points(&t, &src);
        let cfg = IcpConfig { max_iterations: 100, ..IcpConfig::default() };
        let r = icp_align(&src, &dst, &cfg).unwrap();
        let (te, _) = pose_error(&r.pose, &t);
        assert!(te < 1e-3, "translation error {te}");
    }

    #[test]
    fn far_apart_clouds_fail() {
        let src = blob(3, 100);
        let dst = transform_points(&Pose::from_translation(Vector3::new(100.0, 0.0, 0.0)), &src);
        let cfg = IcpConfig { max_correspondence_dist: 5.0, ..IcpConfig::default() };
        assert_eq!(icp_align(&src, &dst, &cfg), Err(BaselineError::NoCorrespondences(5.0)));
        assert_eq!(icp_align(&PointCloud::default(), &dst, &cfg), Err(BaselineError::EmptyCloud));
    }

    #[test]
    fn rmse_never_increases() {
        for seed in 0..20 {
            let src = blob(100 + seed, 400);
            let mut rng = seeded_rng(seed);
            let t = Pose::from_yaw(
                rng.random_range(-0.1..0.1),
                Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0),
            );
            let dst = transform_points(&t, &src);
            let cfg = IcpConfig { max_correspondence_dist: 50.0, ..IcpConfig::default() };
            let r = icp_align(&src, &dst, &cfg).unwrap();
            for w in r.rmse_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "seed {seed}: {:?}", r.rmse_history);
            }
        }
    }

    #[test]
    fn hash_matches_brute_force() {
        let pts = blob(5, 500).points;
        let index = SpatialHash::new(&pts, 1.0);
        let mut rng = seeded_rng(6);
        for _ in 0..200 {
            let q = Vector3::new(rng.random_range(-6.0..6.0), rng.random_range(-4.0..4.0), rng.random_range(-1.0..3.0));
            let brute = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .filter(|&(_, d)| d <= 1.0)
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            assert_eq!(index.nearest(&q), brute);
        }
    }
}
