use super::{BaselineError, BoxObservation};
use crate::geometry::Pose;
use crate::pgc::kabsch_points;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphMatchConfig {
    /// Two pairs agree when their center-to-center distances differ by less than this.
    pub edge_consistency_eps: f64,
    pub min_consensus: usize,
}

impl Default for GraphMatchConfig {
    fn default() -> Self {
        Self {
            edge_consistency_eps: 0.3,
            min_consensus: 3,
        }
    }
}

impl GraphMatchConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.edge_consistency_eps > 0.0) || self.min_consensus < 3 {
            return Err(BaselineError::InvalidConfig(
                "edge_consistency_eps must be positive and min_consensus at least 3".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphMatch {
    /// Maps neighbor-frame coordinates into the ego frame.
    pub pose: Pose,
    /// `(ego box index, neighbor box index)`.
    pub pairs: Vec<(usize, usize)>,
}

/// Greedy distance-consistent matching of box centers, then a rigid fit on the matches.
pub fn graph_match_align(
    ego: &BoxObservation,
    nbr: &BoxObservation,
    cfg: &GraphMatchConfig,
) -> Result<GraphMatch, BaselineError> {
    cfg.validate()?;
    let a: Vec<Vector3<f64>> = ego.boxes.iter().map(|b| b.center()).collect();
    let b: Vec<Vector3<f64>> = nbr.boxes.iter().map(|b| b.center()).collect();
    let candidates: Vec<(usize, usize)> = (0..a.len()).flat_map(|i| (0..b.len()).map(move |j| (i, j))).collect();
    let n = candidates.len();

    let consistent = |p: (usize, usize), q: (usize, usize)| {
        p.0 != q.0 && p.1 != q.1 && ((a[p.0] - a[q.0]).norm() - (b[p.1] - b[q.1]).norm()).abs() < cfg.edge_consistency_eps
    };
    let mut adjacency = vec![Vec::new(); n];
    for u in 0..n {
        for v in (u + 1)..n {
            if consistent(candidates[u], candidates[v]) {
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&u, &v| adjacency[v].len().cmp(&adjacency[u].len()).then(u.cmp(&v)));

    let mut linked = vec![false; n];
    let mut best: Vec<usize> = Vec::new();
    for &seed in &order {
        if adjacency[seed].len() < best.len() {
            // Sorted by degree, so no later seed can beat the current best.
            break;
        }
        adjacency[seed].iter().for_each(|&v| linked[v] = true);
        let mut set = vec![seed];
        for &cand in &order {
            if cand != seed && linked[cand] && set.iter().all(|&m| adjacency[m].binary_search(&cand).is_ok()) {
                set.push(cand);
            }
        }
        adjacency[seed].iter().for_each(|&v| linked[v] = false);
        if set.len() > best.len() {
            best = set;
        }
    }

    if best.len() < cfg.min_consensus {
        return Err(BaselineError::NoConsensus {
            matched: best.len(),
            required: cfg.min_consensus,
        });
    }
    let mut pairs: Vec<(usize, usize)> = best.iter().map(|&k| candidates[k]).collect();
    pairs.sort_unstable();
    let src: Vec<_> = pairs.iter().map(|&(_, j)| b[j]).collect();
    let dst: Vec<_> = pairs.iter().map(|&(i, _)| a[i]).collect();
    let pose = kabsch_points(&src, &dst).map_err(|_| BaselineError::Degenerate)?;
    Ok(GraphMatch { pose, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::RotatedBox3D;
    use crate::geometry::{pose_error, seeded_rng};
    use rand::Rng;

    fn world_boxes(seed: u64, n: usize) -> Vec<RotatedBox3D> {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| {
                RotatedBox3D::new(
                    rng.random_range(-30.0..30.0),
                    rng.random_range(-30.0..30.0),
                    0.8,
                    1.6,
                    2.0,
                    4.5,
                    rng.random_range(-3.0..3.0),
                )
                .unwrap()
            })
            .collect()
    }

    fn observe(boxes: &[RotatedBox3D], agent: &Pose) -> BoxObservation {
        let inv = agent.inverse();
        BoxObservation::new(boxes.iter().map(|b| b.transformed(&inv)).collect())
    }

    #[test]
    fn recovers_relative_pose_from_five_shared() {
        let boxes = world_boxes(1, 5);
        let ego = Pose::from_yaw(0.3, Vector3::new(2.0, -1.0, 0.0));
        let nbr = Pose::from_yaw(-1.1, Vector3::new(-8.0, 5.0, 0.0));
        let m = graph_match_align(&observe(&boxes, &ego), &observe(&boxes, &nbr), &GraphMatchConfig::default()).unwrap();
        let gt = ego.inverse().compose(&nbr);
        let (te, re) = pose_error(&m.pose, &gt);
        assert!(te < 1e-6 && re < 1e-6);
        assert_eq!(m.pairs, (0..5).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_shared_objects_fail() {
        let boxes = world_boxes(2, 8);
        let cfg = GraphMatchConfig::default();
        let ego = observe(&boxes[..4], &Pose::identity());
        let nbr = observe(&boxes[4..], &Pose::from_yaw(0.5, Vector3::new(3.0, 0.0, 0.0)));
        assert!(matches!(graph_match_align(&ego, &nbr, &cfg), Err(BaselineError::NoConsensus { .. })));
        let two = observe(&boxes[..2], &Pose::identity());
        assert!(matches!(
            graph_match_align(&two, &two, &cfg),
            Err(BaselineError::NoConsensus { matched: 2, required: 3 })
        ));
        let empty = BoxObservation::default();
        assert!(matches!(graph_match_align(&empty, &ego, &cfg), Err(BaselineError::NoConsensus { matched: 0, .. })));
    }

    #[test]
    fn swapping_agents_inverts_pose() {
        for seed in 0..10 {
            let mut rng = seeded_rng(seed + 50);
            let shared = world_boxes(seed, 6);
            let mut extra_a = world_boxes(seed + 1000, 3);
            extra_a.iter_mut().for_each(|b| b.x += 100.0);
            let mut extra_b = world_boxes(seed + 2000, 3);
            extra_b.iter_mut().for_each(|b| b.x -= 100.0);
            let pa = Pose::from_yaw(rng.random_range(-3.0..3.0), Vector3::new(rng.random_range(-9.0..9.0), 0.0, 0.0));
            let pb = Pose::from_yaw(rng.random_range(-3.0..3.0), Vector3::new(0.0, rng.random_range(-9.0..9.0), 0.0));
            let a = observe(&[shared.clone(), extra_a].concat(), &pa);
            let b = observe(&[extra_b, shared].concat(), &pb);
            let cfg = GraphMatchConfig::default();
            let ab = graph_match_align(&a, &b, &cfg).unwrap();
            let ba = graph_match_align(&b, &a, &cfg).unwrap();
            let (te, re) = pose_error(&ab.pose.compose(&ba.pose), &Pose::identity());
            assert!(te < 1e-6 && re.to_radians() < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = GraphMatchConfig { min_consensus: 2, ..GraphMatchConfig::default() };
        assert!(graph_match_align(&BoxObservation::default(), &BoxObservation::default(), &cfg).is_err());
    }
}
