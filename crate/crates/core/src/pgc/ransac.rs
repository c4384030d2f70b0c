use super::solve::kabsch_points;
use super::{confidence_from_error, PgcError, SceneCoordPrediction};
use crate::geometry::{substream, Pose};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Residual `|R x + t - y|_2` (meters) below which a correspondence supports a hypothesis.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub sample_size: usize,
    /// Adaptive stop once this probability of having drawn an all-inlier sample is reached.
    pub confidence_stop: f64,
    pub seed: u64,
    /// Evaluate hypotheses in parallel batches. Results are identical to sequential mode.
    pub parallel: bool,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 256,
            inlier_threshold: 0.5,
            min_inliers: 10,
            sample_size: 3,
            confidence_stop: 0.999,
            seed: 0,
            parallel: false,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), PgcError> {
        if self.sample_size < 3 {
            return Err(PgcError::InvalidConfig(format!("sample_size {} < 3", self.sample_size)));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(PgcError::InvalidConfig("inlier_threshold must be > 0".into()));
        }
        if self.min_inliers == 0 || self.max_iterations == 0 {
            return Err(PgcError::InvalidConfig("min_inliers and max_iterations must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.confidence_stop) {
            return Err(PgcError::InvalidConfig("confidence_stop must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A fitted agent pose with its confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub confidence: f64,
    /// Mean predicted error over the consensus set (meters).
    pub aggregated_error: f64,
    pub inlier_indices: Vec<usize>,
    pub inlier_ratio: f64,
}

/// What an agent transmits about its pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseMessage {
    /// `[R | t]`, row-major.
    pub pose: [f64; 12],
    pub confidence: f64,
    pub aggregated_error: f64,
    pub inlier_ratio: f64,
}

impl PoseMessage {
    pub fn from_pose(pose: &Pose, confidence: f64, aggregated_error: f64, inlier_ratio: f64) -> Self {
        Self {
            pose: pose.to_row_major(),
            confidence,
            aggregated_error,
            inlier_ratio,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pose message is always serializable")
    }

    pub fn byte_len(&self) -> usize {
        self.to_json().len()
    }

    pub fn pose(&self) -> Pose {
        Pose::from_row_major(&self.pose)
    }
}

impl PoseEstimate {
    pub fn message(&self) -> PoseMessage {
        PoseMessage::from_pose(&self.pose, self.confidence, self.aggregated_error, self.inlier_ratio)
    }
}

struct Hypothesis {
    iteration: usize,
    inliers: Vec<usize>,
    mean_residual: f64,
}

impl Hypothesis {
    /// More inliers wins, then lower mean residual, then the earlier iteration.
    fn beats(&self, other: &Hypothesis) -> bool {
        if self.inliers.len() != other.inliers.len() {
            return self.inliers.len() > other.inliers.len();
        }
        if self.mean_residual != other.mean_residual {
            return self.mean_residual < other.mean_residual;
        }
        self.iteration < other.iteration
    }
}

fn score(pose: &Pose, local: &[Vector3<f64>], world: &[Vector3<f64>], threshold: f64) -> (Vec<usize>, f64) {
    let mut inliers = Vec::new();
    let mut sum = 0.0;
    for (i, (x, y)) in local.iter().zip(world).enumerate() {
        let r = (pose.transform_point(x) - y).norm();
        if r < threshold {
            inliers.push(i);
            sum += r;
        }
    }
    let mean = if inliers.is_empty() { f64::INFINITY } else { sum / inliers.len() as f64 };
    (inliers, mean)
}

fn hypothesize(
    iteration: usize,
    local: &[Vector3<f64>],
    world: &[Vector3<f64>],
    cfg: &RansacConfig,
) -> Option<Hypothesis> {
    let mut rng = substream(cfg.seed, iteration as u64);
    let idx = rand::seq::index::sample(&mut rng, local.len(), cfg.sample_size);
    let xs: Vec<Vector3<f64>> = idx.iter().map(|i| local[i]).collect();
    let ys: Vec<Vector3<f64>> = idx.iter().map(|i| world[i]).collect();
    let pose = kabsch_points(&xs, &ys).ok()?;
    let (inliers, mean_residual) = score(&pose, local, world, cfg.inlier_threshold);
    Some(Hypothesis {
        iteration,
        inliers,
        mean_residual,
    })
}

fn required_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64, cap: usize) -> usize {
    if inlier_ratio >= 1.0 {
        return 1;
    }
    let p_good = inlier_ratio.powi(sample_size as i32);
    if p_good <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    if n.is_finite() {
        (n.ceil() as usize).clamp(1, cap)
    } else {
        cap
    }
}

const PARALLEL_BATCH: usize = 16;

/// Hypothesize-and-verify over minimal samples, refit on the consensus set.
///
/// Iteration `k` draws its sample from substream `k` of `cfg.seed`, so the
/// outcome does not depend on `cfg.parallel`.
pub fn ransac_pose(pred: &SceneCoordPrediction, cfg: &RansacConfig) -> Result<PoseEstimate, PgcError> {
    cfg.validate()?;
    pred.validate()?;
    let n = pred.len();
    if n < cfg.sample_size {
        return Err(PgcError::TooFewPoints {
            required: cfg.sample_size,
            got: n,
        });
    }
    let local = &pred.local_points.points;
    let world = &pred.predicted_world.points;

    let mut best: Option<Hypothesis> = None;
    let mut needed = cfg.max_iterations;
    let mut next = 0usize;
    'outer: while next < needed {
        let batch_end = if cfg.parallel {
            (next + PARALLEL_BATCH).min(cfg.max_iterations)
        } else {
            next + 1
        };
        let hyps: Vec<Option<Hypothesis>> = if cfg.parallel {
            (next..batch_end)
                .into_par_iter()
                .map(|it| hypothesize(it, local, world, cfg))
                .collect()
        } else {
            vec![hypothesize(next, local, world, cfg)]
        };
        for (offset, h) in hyps.into_iter().enumerate() {
            if next + offset >= needed {
                break 'outer;
            }
            let Some(h) = h else { continue };
            if best.as_ref().is_none_or(|b| h.beats(b)) {
                let ratio = h.inliers.len() as f64 / n as f64;
                needed = required_iterations(ratio, cfg.sample_size, cfg.confidence_stop, cfg.max_iterations)
                    .max(h.iteration + 1);
                best = Some(h);
            }
        }
        next = batch_end;
    }

    let best_count = best.as_ref().map_or(0, |b| b.inliers.len());
    if best_count < cfg.min_inliers {
        return Err(PgcError::InsufficientConsensus {
            best: best_count,
            required: cfg.min_inliers,
        });
    }
    let best = best.expect("non-empty consensus implies a hypothesis");
    let xs: Vec<Vector3<f64>> = best.inliers.iter().map(|&i| local[i]).collect();
    let ys: Vec<Vector3<f64>> = best.inliers.iter().map(|&i| world[i]).collect();
    let pose = kabsch_points(&xs, &ys)?;
    let aggregated_error =
        best.inliers.iter().map(|&i| pred.predicted_error[i]).sum::<f64>() / best.inliers.len() as f64;
    Ok(PoseEstimate {
        pose,
        confidence: confidence_from_error(aggregated_error)?,
        aggregated_error,
        inlier_ratio: best.inliers.len() as f64 / n as f64,
        inlier_indices: best.inliers,
    })
}
