use super::{HarnessError, ScenarioConfig};
use crate::baselines::BoxObservation;
use crate::detection::RotatedBox3D;
use crate::fusion::GridSpec;
use crate::geometry::{PointCloud, Pose, SeededRng};
use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub gt_pose: Pose,
    /// One scan per frame, oldest first, in the agent frame.
    pub clouds: Vec<PointCloud>,
    /// Indices into `Scenario::world_objects` this agent observes.
    pub visible: Vec<usize>,
}

impl AgentState {
    /// The most recent scan.
    pub fn cloud(&self) -> &PointCloud {
        self.clouds.last().expect("at least one frame")
    }
}

/// A synthetic multi-agent scene. Agent 0 is the ego vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub agents: Vec<AgentState>,
    /// Ground-truth boxes in the world frame.
    pub world_objects: Vec<RotatedBox3D>,
}

impl Scenario {
    pub fn ego(&self) -> &AgentState {
        &self.agents[0]
    }

    /// Boxes agent `a` sees, expressed in its own frame.
    pub fn observed_boxes(&self, a: usize) -> BoxObservation {
        let inv = self.agents[a].gt_pose.inverse();
        BoxObservation::new(self.agents[a].visible.iter().map(|&k| self.world_objects[k].transformed(&inv)).collect())
    }

    /// Objects seen by both agents.
    pub fn shared_objects(&self, a: usize, b: usize) -> Vec<usize> {
        self.agents[a]
            .visible
            .iter()
            .copied()
            .filter(|k| self.agents[b].visible.contains(k))
            .collect()
    }

    /// Objects observed by at least one agent whose centers fall inside `spec`
    /// laid out in the ego frame, expressed in the ego frame.
    pub fn ego_ground_truth(&self, spec: &GridSpec) -> Vec<RotatedBox3D> {
        let inv = self.ego().gt_pose.inverse();
        (0..self.world_objects.len())
            .filter(|k| self.agents.iter().any(|a| a.visible.contains(k)))
            .map(|k| self.world_objects[k].transformed(&inv))
            .filter(|b| spec.cell_of(b.x, b.y).is_some())
            .collect()
    }
}

fn road_yaw(rng: &mut SeededRng, jitter: &Normal<f64>) -> f64 {
    let base = if rng.random_bool(0.5) { 0.0 } else { PI };
    crate::geometry::normalize_angle(base + jitter.sample(rng))
}

/// Points on the upper half-ellipsoid spanned by the box footprint and height,
/// so the maximum height is reached at the box center.
fn sample_vehicle(b: &RotatedBox3D, n: usize, rng: &mut SeededRng) -> impl Iterator<Item = Vector3<f64>> + use<> {
    let samples: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>().sqrt(), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let (s, c) = b.theta.sin_cos();
    let b = *b;
    samples.into_iter().map(move |(r, phi)| {
        let lx = r * phi.cos() * 0.5 * b.l;
        let ly = r * phi.sin() * 0.5 * b.w;
        let z = b.h * (1.0 - r * r).max(0.0).sqrt();
        Vector3::new(b.x + c * lx - s * ly, b.y + s * lx + c * ly, z)
    })
}

fn scan(cfg: &ScenarioConfig, agent: &Pose, objects: &[RotatedBox3D], visible: &[usize], rng: &mut SeededRng) -> PointCloud {
    let mut world: Vec<Vector3<f64>> = Vec::new();
    for &k in visible {
        world.extend(sample_vehicle(&objects[k], cfg.points_per_object, rng));
    }
    let origin = agent.translation;
    for _ in 0..cfg.ground_points {
        let r = cfg.sensing_range * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..2.0 * PI);
        world.push(Vector3::new(origin.x + r * phi.cos(), origin.y + r * phi.sin(), rng.random_range(0.0..0.05)));
    }
    let inv = agent.inverse();
    world
        .iter()
        .map(|p| inv.transform_point(p))
        .filter(|p| p.norm() <= cfg.sensing_range)
        .collect()
}

fn place_agents(cfg: &ScenarioConfig, center: Vector2<f64>, rng: &mut SeededRng, jitter: &Normal<f64>) -> Result<Vec<Pose>, HarnessError> {
    let mut poses = Vec::with_capacity(cfg.agents);
    let ego = center + Vector2::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)) * cfg.ego_jitter;
    poses.push(Pose::from_yaw(road_yaw(rng, jitter), Vector3::new(ego.x, ego.y, 0.0)));
    for _ in 1..cfg.agents {
        let mut placed = false;
        for _ in 0..cfg.max_retries {
            let d = rng.random_range(cfg.neighbor_distance[0]..=cfg.neighbor_distance[1]);
            let phi = rng.random_range(0.0..2.0 * PI);
            let p = ego + Vector2::new(d * phi.cos(), d * phi.sin());
            if poses.iter().all(|q: &Pose| (q.translation.xy() - p).norm() >= cfg.min_object_spacing.max(5.0)) {
                poses.push(Pose::from_yaw(road_yaw(rng, jitter), Vector3::new(p.x, p.y, 0.0)));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(HarnessError::Scenario("could not place agents".into()));
        }
    }
    Ok(poses)
}

/// Generates a scene deterministically from `rng`.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64, rng: &mut SeededRng) -> Result<Scenario, HarnessError> {
    cfg.validate()?;
    let jitter = Normal::new(0.0, cfg.yaw_jitter).map_err(|e| HarnessError::Config(e.to_string()))?;
    let center = Vector2::new(
        rng.random_range(-1.0..=1.0) * cfg.world_extent,
        rng.random_range(-1.0..=1.0) * cfg.world_extent,
    );
    let poses = place_agents(cfg, center, rng, &jitter)?;
    let n_agents = poses.len();
    let in_range = |p: &Vector2<f64>, a: usize| (poses[a].translation.xy() - p).norm() <= cfg.sensing_range - 3.0;

    let mut objects: Vec<RotatedBox3D> = Vec::with_capacity(cfg.objects);
    let mut visible: Vec<Vec<usize>> = vec![Vec::new(); n_agents];
    for k in 0..cfg.objects {
        // Agents this object must be visible to, if visibility is prescribed.
        let viewers: Option<Vec<usize>> = cfg.co_visible.map(|cv| {
            if k < cv {
                (0..n_agents).collect()
            } else {
                vec![(k - cv) % n_agents]
            }
        });
        let mut placed = None;
        for _ in 0..cfg.max_retries {
            let p = center
                + Vector2::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)) * cfg.object_area;
            let clear = objects.iter().all(|o| (Vector2::new(o.x, o.y) - p).norm() >= cfg.min_object_spacing)
                && poses.iter().all(|q| (q.translation.xy() - p).norm() >= cfg.min_object_spacing);
            let reachable = match &viewers {
                Some(v) => v.iter().all(|&a| in_range(&p, a)),
                None => true,
            };
            if clear && reachable {
                placed = Some(p);
                break;
            }
        }
        let p = placed.ok_or_else(|| HarnessError::Scenario(format!("could not place object {k}")))?;
        let h = rng.random_range(1.5..1.7);
        let b = RotatedBox3D::new(
            p.x,
            p.y,
            0.5 * h,
            h,
            rng.random_range(1.8..2.0),
            rng.random_range(4.2..4.8),
            road_yaw(rng, &jitter),
        )
        .map_err(|e| HarnessError::Scenario(e.to_string()))?;
        match &viewers {
            Some(v) => v.iter().for_each(|&a| visible[a].push(k)),
            None => {
                for (a, vis) in visible.iter_mut().enumerate() {
                    let seen = rng.random_bool(cfg.visibility_prob);
                    if seen && in_range(&p, a) {
                        vis.push(k);
                    }
                }
            }
        }
        objects.push(b);
    }

    let agents = poses
        .into_iter()
        .enumerate()
        .map(|(a, pose)| {
            let clouds = (0..cfg.frames).map(|_| scan(cfg, &pose, &objects, &visible[a], rng)).collect();
            AgentState {
                id: a,
                gt_pose: pose,
                clouds,
                visible: visible[a].clone(),
            }
        })
        .collect();
    Ok(Scenario {
        seed,
        agents,
        world_objects: objects,
    })
}

/// Scenario `index` of an experiment with base seed `seed`.
pub fn scenario_seed(seed: u64, index: usize) -> u64 {
    crate::geometry::substream(seed, index as u64).random()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    id: usize,
    gt_pose: [f64; 12],
    visible: Vec<usize>,
    clouds: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    seed: u64,
    world_objects: Vec<RotatedBox3D>,
    agents: Vec<AgentFile>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl Scenario {
    /// Writes `<stem>.json` plus one binary cloud per agent and frame into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf, HarnessError> {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut agents = Vec::new();
        for a in &self.agents {
            let mut names = Vec::new();
            for (t, cloud) in a.clouds.iter().enumerate() {
                let name = format!("{stem}_agent{}_frame{t}.bin", a.id);
                let path = dir.join(&name);
                std::fs::write(&path, cloud.to_binary()).map_err(io(&path))?;
                names.push(name);
            }
            agents.push(AgentFile {
                id: a.id,
                gt_pose: a.gt_pose.to_row_major(),
                visible: a.visible.clone(),
                clouds: names,
            });
        }
        let file = ScenarioFile {
            seed: self.seed,
            world_objects: self.world_objects.clone(),
            agents,
        };
        let path = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&file).expect("scenario serializes") + "\n";
        std::fs::write(&path, text).map_err(io(&path))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Scenario, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut agents = Vec::new();
        for a in file.agents {
            let mut clouds = Vec::new();
            for name in &a.clouds {
                let p = dir.join(name);
                let bytes = std::fs::read(&p).map_err(io(&p))?;
                clouds.push(PointCloud::from_binary(&bytes).map_err(|e| HarnessError::Scenario(e.to_string()))?);
            }
            if clouds.is_empty() || a.visible.iter().any(|&k| k >= file.world_objects.len()) {
                return Err(HarnessError::Scenario(format!("agent {} is malformed", a.id)));
            }
            agents.push(AgentState {
                id: a.id,
                gt_pose: Pose::from_row_major(&a.gt_pose),
                clouds,
                visible: a.visible,
            });
        }
        if agents.is_empty() {
            return Err(HarnessError::Scenario("scenario has no agents".into()));
        }
        Ok(Scenario {
            seed: file.seed,
            agents,
            world_objects: file.world_objects,
        })
    }
}
