use super::grid::{sample_plane, warp_grid, BevGrid};
use super::FusionError;
use crate::geometry::{normalize_angle, relative, Pose, Pose2D};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Residual planar misalignment between two feature grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OffsetDelta {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl OffsetDelta {
    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self {
            dx,
            dy,
            dtheta: normalize_angle(dtheta),
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn as_pose2d(&self) -> Pose2D {
        Pose2D::new(self.dx, self.dy, self.dtheta)
    }

    pub fn from_pose2d(p: &Pose2D) -> Self {
        Self::new(p.x, p.y, p.theta)
    }

    /// The offset that undoes this one.
    pub fn inverse(&self) -> Self {
        Self::from_pose2d(&self.as_pose2d().inverse())
    }

    pub fn norm(&self) -> f64 {
        (self.dx * self.dx + self.dy * self.dy + self.dtheta * self.dtheta).sqrt()
    }
}

/// Warps every grid into the ego frame using `relative(ego_pose, pose_j)`
/// projected to the ground plane. The grid whose pose equals `ego_pose`
/// (typically the ego's own) passes through untouched.
pub fn coarse_align(ego_pose: &Pose, grids: &[(BevGrid, Pose)]) -> Result<Vec<BevGrid>, FusionError> {
    let Some((first, _)) = grids.first() else {
        return Ok(Vec::new());
    };
    if grids.iter().any(|(g, _)| g.spec != first.spec) {
        return Err(FusionError::ShapeMismatch("grids use different specs".into()));
    }
    Ok(grids
        .iter()
        .map(|(g, pose)| {
            if pose == ego_pose {
                g.clone()
            } else {
                warp_grid(g, &relative(ego_pose, pose).to_planar())
            }
        })
        .collect())
}

/// Appends to each grid one constant channel holding `sigma_i / sum_j sigma_j`.
pub fn confidence_embed(grids: &[BevGrid], sigmas: &[f64]) -> Result<Vec<BevGrid>, FusionError> {
    let weights = normalized_confidences(sigmas)?;
    if grids.len() != sigmas.len() {
        return Err(FusionError::LengthMismatch(grids.len(), sigmas.len()));
    }
    Ok(grids
        .iter()
        .zip(weights)
        .map(|(g, w)| {
            let mut out = g.clone();
            out.push_constant_channel(w);
            out
        })
        .collect())
}

pub fn normalized_confidences(sigmas: &[f64]) -> Result<Vec<f64>, FusionError> {
    if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(FusionError::InvalidConfidence);
    }
    let total: f64 = sigmas.iter().sum();
    if !(total > 0.0) {
        return Err(FusionError::InvalidConfidence);
    }
    Ok(sigmas.iter().map(|s| s / total).collect())
}

/// Warps each grid by its own offset.
pub fn apply_offset(grids: &[BevGrid], deltas: &[OffsetDelta]) -> Result<Vec<BevGrid>, FusionError> {
    if grids.len() != deltas.len() {
        return Err(FusionError::LengthMismatch(grids.len(), deltas.len()));
    }
    Ok(grids
        .iter()
        .zip(deltas)
        .map(|(g, d)| warp_grid(g, &d.as_pose2d()))
        .collect())
}

/// Discretized search window for [`fsa_oracle_estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsaSearch {
    pub range_xy: f64,
    pub step_xy: f64,
    /// Radians.
    pub range_theta: f64,
    pub step_theta: f64,
    pub parallel: bool,
}

impl Default for FsaSearch {
    fn default() -> Self {
        Self {
            range_xy: 2.0,
            step_xy: 0.25,
            range_theta: 10f64.to_radians(),
            step_theta: 1f64.to_radians(),
            parallel: false,
        }
    }
}

impl FsaSearch {
    fn axis(range: f64, step: f64) -> Vec<f64> {
        if !(step > 0.0) || !(range > 0.0) {
            return vec![0.0];
        }
        let k = (range / step + 1e-9).floor() as i64;
        (-k..=k).map(|i| i as f64 * step).collect()
    }

    pub fn candidates(&self) -> Vec<OffsetDelta> {
        let xs = Self::axis(self.range_xy, self.step_xy);
        let ts = Self::axis(self.range_theta, self.step_theta);
        let mut out = Vec::with_capacity(xs.len() * xs.len() * ts.len());
        for &t in &ts {
            for &dy in &xs {
                for &dx in &xs {
                    out.push(OffsetDelta::new(dx, dy, t));
                }
            }
        }
        out
    }
}

fn centered(values: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let c: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let ss: f64 = c.iter().map(|v| v * v).sum();
    (ss > 0.0).then_some((c, ss))
}

/// Normalized cross-correlation between the ego occupancy and the neighbor
/// occupancy sampled under candidate offsets.
struct NccScorer<'a> {
    spec: super::GridSpec,
    ego_c: Vec<f64>,
    ego_ss: f64,
    nbr_plane: &'a [f64],
    centers: Vec<(f64, f64)>,
}

impl<'a> NccScorer<'a> {
    fn new(ego: &BevGrid, nbr: &'a BevGrid) -> Result<Self, FusionError> {
        if ego.spec != nbr.spec {
            return Err(FusionError::ShapeMismatch("ego and neighbor grids differ in spec".into()));
        }
        let spec = ego.spec;
        let (ego_c, ego_ss) = centered(ego.channel(0)).ok_or(FusionError::NoSignal)?;
        let nbr_plane = nbr.channel(0);
        if centered(nbr_plane).is_none() {
            return Err(FusionError::NoSignal);
        }
        let centers = (0..spec.height)
            .flat_map(|r| (0..spec.width).map(move |c| spec.cell_center(r, c)))
            .collect();
        Ok(Self {
            spec,
            ego_c,
            ego_ss,
            nbr_plane,
            centers,
        })
    }

    /// Cell centers rotated by `dtheta`, before translation.
    fn rotated(&self, dtheta: f64) -> Vec<(f64, f64)> {
        let (s, c) = dtheta.sin_cos();
        self.centers.iter().map(|&(x, y)| (c * x - s * y, s * x + c * y)).collect()
    }

    fn score_rotated(&self, rotated: &[(f64, f64)], dx: f64, dy: f64) -> Option<f64> {
        let spec = self.spec;
        let n = rotated.len() as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut cross = 0.0;
        for (k, &(x, y)) in rotated.iter().enumerate() {
            let (u, v) = spec.to_index(x + dx, y + dy);
            let val = sample_plane(self.nbr_plane, spec.width, spec.height, u, v);
            if val != 0.0 {
                sum += val;
                sum_sq += val * val;
                cross += self.ego_c[k] * val;
            }
        }
        // sum(e_c * (b - mean_b)) = sum(e_c * b) because e_c is zero-mean.
        let var_b = sum_sq - sum * sum / n;
        (var_b > 1e-12).then(|| cross / (self.ego_ss * var_b).sqrt())
    }

    fn score(&self, d: &OffsetDelta) -> Option<f64> {
        self.score_rotated(&self.rotated(d.dtheta), d.dx, d.dy)
    }
}

/// Score [`fsa_oracle_estimate`] assigns to `delta`; `None` when the sampled
/// neighbor plane is constant.
pub fn fsa_oracle_score(ego: &BevGrid, nbr: &BevGrid, delta: &OffsetDelta) -> Result<Option<f64>, FusionError> {
    Ok(NccScorer::new(ego, nbr)?.score(delta))
}

/// Exhaustive search for the planar offset `delta` with `nbr ~ warp(ego, delta)`,
/// scored by normalized cross-correlation of the occupancy channels (channel 0).
/// Exact score ties go to the candidate with the smallest `|(dx, dy, dtheta)|`.
pub fn fsa_oracle_estimate(ego: &BevGrid, nbr: &BevGrid, search: &FsaSearch) -> Result<OffsetDelta, FusionError> {
    let scorer = NccScorer::new(ego, nbr)?;
    let candidates = search.candidates();
    // Candidates are grouped by angle, so each rotation is computed once per group.
    let per_angle = |group: &[OffsetDelta]| -> Vec<Option<f64>> {
        let rotated = scorer.rotated(group[0].dtheta);
        group.iter().map(|d| scorer.score_rotated(&rotated, d.dx, d.dy)).collect()
    };
    let groups: Vec<&[OffsetDelta]> = candidates.chunk_by(|a, b| a.dtheta == b.dtheta).collect();
    let scores: Vec<Option<f64>> = if search.parallel {
        groups.par_iter().flat_map_iter(|g| per_angle(g)).collect()
    } else {
        groups.iter().flat_map(|g| per_angle(g)).collect()
    };
    let mut best: Option<(f64, OffsetDelta)> = None;
    for (cand, s) in candidates.iter().zip(scores) {
        let Some(s) = s else { continue };
        let better = match &best {
            None => true,
            Some((bs, bd)) => s > *bs || (s == *bs && cand.norm() < bd.norm()),
        };
        if better {
            best = Some((s, *cand));
        }
    }
    best.map(|(_, d)| d).ok_or(FusionError::NoSignal)
}
