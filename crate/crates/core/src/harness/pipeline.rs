use super::{CommLedger, ExperimentConfig, HarnessError, MessageKind, Method, NoiseLevel, Scenario};
use crate::baselines::{graph_match_align, icp_align, BoxObservation};
use crate::detection::{decode_head, DecodeHead, Detection, RotatedBox3D};
use crate::fusion::{
    coarse_align, confidence_embed, fsa_oracle_estimate, fsa_oracle_score, normalized_confidences, rasterize_bev, warp_grid, BevGrid,
    FusionError, OffsetDelta,
};
use crate::geometry::{perturb_pose, pose_error, substream, GaussianPoseNoise, PointCloud, Pose};
use crate::pgc::{confidence_from_error, oracle_predict, ransac_pose, PgcError, PoseEstimate, PoseMessage};
use crate::temporal::{encode, last_frame_encoding, ViTParams};
use rand::Rng;
use serde::Serialize;

/// Channels of the fused BEV map: occupancy, log-count, max height, confidence-weighted occupancy.
pub const FUSED_CHANNELS: usize = 4;

// Substream offsets keep the random draws of different stages independent.
const ORACLE_STREAM: u64 = 1_000;
const RANSAC_STREAM: u64 = 2_000;
const GNSS_STREAM: u64 = 3_000;
const VIT_STREAM: u64 = 4_000;

/// Nominal vehicle extents the hand-built head regresses to.
const NOMINAL_H: f64 = 1.6;
const NOMINAL_W: f64 = 1.9;
const NOMINAL_L: f64 = 4.5;

/// Pose an agent contributes to fusion, as seen by the ego.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentPose {
    pub agent: usize,
    /// `[R | t]` row-major.
    pub pose: [f64; 12],
    pub confidence: f64,
    pub translation_error_m: f64,
    pub rotation_error_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutput {
    pub method: Method,
    pub detections: Vec<Detection>,
    /// Ego-frame boxes of objects observed by at least one agent inside the ego grid.
    pub ground_truth: Vec<RotatedBox3D>,
    pub ledger: CommLedger,
    /// One entry per agent; `None` when the agent was excluded.
    pub poses: Vec<Option<AgentPose>>,
    /// Residual offsets found by feature alignment, one per neighbor (ego is `None`).
    pub offsets: Vec<Option<OffsetDelta>>,
    /// Normalized fusion weights of the agents that took part.
    pub weights: Vec<f64>,
}

pub(crate) fn derived_seed(seed: u64, stream: u64) -> u64 {
    substream(seed, stream).random()
}

/// Per-agent pose from scene-coordinate prediction and RANSAC on the latest scan.
pub(crate) fn pgc_estimate(scenario: &Scenario, agent: usize, cfg: &ExperimentConfig) -> Result<PoseEstimate, PgcError> {
    let a = &scenario.agents[agent];
    let mut rng = substream(scenario.seed, ORACLE_STREAM + agent as u64);
    let pred = oracle_predict(a.cloud(), &a.gt_pose, &cfg.oracle, &mut rng)?;
    let ransac = crate::pgc::RansacConfig {
        seed: derived_seed(scenario.seed, RANSAC_STREAM + agent as u64),
        ..cfg.ransac
    };
    ransac_pose(&pred, &ransac)
}

/// Ground-truth pose with GNSS-style noise. The draws for a given agent are the
/// same at every noise level, so offsets grow linearly with the level.
pub(crate) fn gnss_pose(scenario: &Scenario, agent: usize, noise: NoiseLevel) -> Pose {
    let mut rng = substream(scenario.seed, GNSS_STREAM + agent as u64);
    let n = GaussianPoseNoise {
        sigma_t: noise.sigma_t(),
        sigma_r: noise.sigma_r(),
    };
    perturb_pose(&scenario.agents[agent].gt_pose, &n, &mut rng)
}

fn box_corners(obs: &BoxObservation) -> PointCloud {
    obs.boxes.iter().flat_map(|b| b.corners_3d()).collect()
}

/// Neighbor-to-ego transform from shared boxes.
pub(crate) fn box_alignment(
    scenario: &Scenario,
    nbr: usize,
    method: Method,
    cfg: &ExperimentConfig,
) -> Result<Pose, HarnessError> {
    let ego = scenario.observed_boxes(0);
    let other = scenario.observed_boxes(nbr);
    match method {
        Method::Graph => Ok(graph_match_align(&ego, &other, &cfg.graph)?.pose),
        Method::Icp => {
            let (src, dst) = (box_corners(&other), box_corners(&ego));
            if src.len() < 3 || dst.len() < 3 {
                return Err(crate::baselines::BaselineError::EmptyCloud.into());
            }
            Ok(icp_align(&src, &dst, &cfg.icp)?.pose)
        }
        _ => Err(HarnessError::Config(format!("{method} is not a box-based aligner"))),
    }
}

fn agent_pose(scenario: &Scenario, agent: usize, pose: Pose, confidence: f64) -> AgentPose {
    let (t, r) = pose_error(&pose, &scenario.agents[agent].gt_pose);
    AgentPose {
        agent,
        pose: pose.to_row_major(),
        confidence,
        translation_error_m: t,
        rotation_error_deg: r,
    }
}

/// Estimates every agent's pose and records the pose or box messages sent to the ego.
fn estimate_poses(
    scenario: &Scenario,
    method: Method,
    noise: NoiseLevel,
    cfg: &ExperimentConfig,
    ledger: &mut CommLedger,
) -> Result<Vec<Option<(Pose, f64)>>, HarnessError> {
    let n = scenario.agents.len();
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let est = match method {
            Method::NoFusion => (a == 0).then(|| (scenario.agents[0].gt_pose, 1.0)),
            Method::Pgc => match pgc_estimate(scenario, a, cfg) {
                Ok(e) => {
                    if a > 0 {
                        ledger.record(a, 0, MessageKind::Pose, e.message().byte_len());
                    }
                    Some((e.pose, e.confidence))
                }
                Err(e) => {
                    log::warn!("scenario {}: agent {a} excluded from fusion: {e}", scenario.seed);
                    None
                }
            },
            Method::GtNoise | Method::GtNoisePastat => {
                let pose = gnss_pose(scenario, a, noise);
                let confidence = if method == Method::GtNoise {
                    1.0
                } else {
                    let (t, _) = pose_error(&pose, &scenario.agents[a].gt_pose);
                    confidence_from_error(t)?
                };
                if a > 0 {
                    ledger.record(a, 0, MessageKind::Pose, PoseMessage::from_pose(&pose, confidence, 0.0, 1.0).byte_len());
                }
                Some((pose, confidence))
            }
            Method::Icp | Method::Graph => {
                // Box aligners work in the ego frame directly.
                if a == 0 {
                    Some((Pose::identity(), 1.0))
                } else {
                    ledger.record(a, 0, MessageKind::Boxes, scenario.observed_boxes(a).byte_len());
                    match box_alignment(scenario, a, method, cfg) {
                        Ok(p) => Some((p, 1.0)),
                        Err(e) => {
                            log::warn!("scenario {}: agent {a} excluded from fusion: {e}", scenario.seed);
                            None
                        }
                    }
                }
            }
        };
        out.push(est);
    }
    Ok(out)
}

/// Confidence-gated max fusion. Feature channels take the cell-wise max over
/// the ego and every neighbor whose weight is at least half the largest
/// weight; the last channel is the weight-averaged occupancy over all agents.
/// The ego's own features are always kept since they need no alignment.
fn fuse(grids: &[BevGrid], weights: &[f64]) -> BevGrid {
    let spec = grids[0].spec;
    let n = spec.cells();
    let wmax = weights.iter().cloned().fold(0.0, f64::max);
    let mut out = BevGrid::zeros(spec, FUSED_CHANNELS);
    let gated: Vec<usize> = (0..grids.len()).filter(|&i| i == 0 || weights[i] >= 0.5 * wmax).collect();
    for ch in 0..FUSED_CHANNELS - 1 {
        let dst = out.channel_mut(ch);
        for (k, d) in dst.iter_mut().enumerate() {
            *d = gated.iter().map(|&i| grids[i].data[ch * n + k]).fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let dst = out.channel_mut(FUSED_CHANNELS - 1);
    for (g, w) in grids.iter().zip(weights) {
        for (d, occ) in dst.iter_mut().zip(g.channel(0)) {
            *d += w * occ;
        }
    }
    out
}

/// Encoder whose embedding copies the fused channels into the first model
/// dimensions, with near-zero transformer weights.
fn build_encoder(cfg: &ExperimentConfig, seed: u64) -> Result<ViTParams, HarnessError> {
    let mut p = ViTParams::init(&cfg.vit, derived_seed(seed, VIT_STREAM), 1e-3)?;
    p.embed_w.fill(0.0);
    p.embed_b.fill(0.0);
    for c in 0..FUSED_CHANNELS.min(cfg.vit.d_model) {
        p.embed_w[(c, c)] = 1.0;
    }
    Ok(p)
}

/// Head that fires on cells whose fused max height is close to a vehicle roof.
fn build_head(d_model: usize, height_offset: f64) -> DecodeHead {
    let mut head = DecodeHead::zeros(d_model);
    let ramp = 0.15 * NOMINAL_H;
    head.set_weight(0, 2, 1.0 / ramp);
    head.bias[0] = -(height_offset + 0.85 * NOMINAL_H) / ramp;
    head.bias[3] = 0.5 * NOMINAL_H;
    head.bias[4] = NOMINAL_H;
    head.bias[5] = NOMINAL_W;
    head.bias[6] = NOMINAL_L;
    head
}

/// Runs pose estimation, coarse alignment, confidence embedding, feature
/// alignment, temporal encoding and detection for one scenario.
pub fn run_pipeline(
    scenario: &Scenario,
    method: Method,
    noise: NoiseLevel,
    cfg: &ExperimentConfig,
) -> Result<PipelineOutput, HarnessError> {
    let spec = cfg.grid;
    let mut ledger = CommLedger::default();
    let mut estimates = estimate_poses(scenario, method, noise, cfg, &mut ledger)?;
    if estimates[0].is_none() {
        log::warn!("scenario {}: ego pose unavailable, falling back to the ego's own features", scenario.seed);
        estimates = vec![None; scenario.agents.len()];
        estimates[0] = Some((scenario.agents[0].gt_pose, 1.0));
    }
    let active: Vec<usize> = (0..estimates.len()).filter(|&a| estimates[a].is_some()).collect();
    let poses: Vec<Pose> = active.iter().map(|&a| estimates[a].unwrap().0).collect();
    let sigmas: Vec<f64> = active.iter().map(|&a| estimates[a].unwrap().1).collect();
    // A zero-confidence set still fuses with equal weights.
    let sigmas = if sigmas.iter().sum::<f64>() > 0.0 { sigmas } else { vec![1.0; active.len()] };
    let weights = normalized_confidences(&sigmas)?;
    log::debug!("scenario {}: agents {active:?} fusion weights {weights:?}", scenario.seed);
    let ego_pose = poses[0];
    let frames = scenario.agents[0].clouds.len();

    // Each agent rasterizes locally and sends one blob per frame.
    let mut per_frame: Vec<Vec<BevGrid>> = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut local = Vec::with_capacity(active.len());
        for (i, &a) in active.iter().enumerate() {
            let above: PointCloud = scenario.agents[a].clouds[t]
                .iter()
                .filter(|p| p.z > cfg.ground_clearance)
                .copied()
                .collect();
            let g = rasterize_bev(&above, &spec);
            if a != 0 {
                ledger.record(a, 0, MessageKind::Features, g.byte_len());
            }
            local.push((g, poses[i]));
        }
        let aligned = coarse_align(&ego_pose, &local)?;
        per_frame.push(confidence_embed(&aligned, &sigmas)?);
    }

    let mut offsets: Vec<Option<OffsetDelta>> = vec![None; scenario.agents.len()];
    if matches!(method, Method::Pgc | Method::GtNoisePastat) {
        let t_last = per_frame.len() - 1;
        for (i, &a) in active.iter().enumerate().skip(1) {
            let last = &per_frame[t_last];
            let delta = match fsa_oracle_estimate(&last[0], &last[i], &cfg.fsa) {
                Ok(d) => {
                    let best = fsa_oracle_score(&last[0], &last[i], &d)?.unwrap_or(f64::NEG_INFINITY);
                    let zero = fsa_oracle_score(&last[0], &last[i], &OffsetDelta::zero())?.unwrap_or(f64::NEG_INFINITY);
                    let accept = best >= cfg.fsa_gate.min_score && best - zero >= cfg.fsa_gate.min_gain;
                    log::debug!(
                        "scenario {}: agent {a} offset {d:?} score {best:.3} vs {zero:.3}, accepted {accept}",
                        scenario.seed
                    );
                    if accept {
                        d
                    } else {
                        OffsetDelta::zero()
                    }
                }
                Err(FusionError::NoSignal) => OffsetDelta::zero(),
                Err(e) => return Err(e.into()),
            };
            let fix = delta.inverse().as_pose2d();
            for frame in per_frame.iter_mut() {
                frame[i] = warp_grid(&frame[i], &fix);
            }
            offsets[a] = Some(delta);
        }
    }

    let fused: Vec<BevGrid> = per_frame.iter().map(|f| fuse(f, &weights)).collect();
    let vit = build_encoder(cfg, scenario.seed)?;
    let encoded = encode(&vit, &fused)?;
    let e_t = last_frame_encoding(&vit, frames);
    let head = build_head(cfg.vit.d_model, e_t[2]);
    let detections = decode_head(&encoded, &head, &cfg.eval)?;
    log::debug!("scenario {}: {frames} frames encoded, {} detections", scenario.seed, detections.len());

    let mut reported: Vec<Option<AgentPose>> = vec![None; scenario.agents.len()];
    for (i, &a) in active.iter().enumerate() {
        reported[a] = Some(agent_pose(scenario, a, poses[i], sigmas[i]));
    }
    Ok(PipelineOutput {
        method,
        detections,
        ground_truth: scenario.ego_ground_truth(&spec),
        ledger,
        poses: reported,
        offsets,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::average_precision;
    use crate::harness::{generate_scenario, ScenarioConfig};
    use crate::pgc::OracleErrorModel;

    fn scenario(cfg: &ScenarioConfig, seed: u64) -> Scenario {
        generate_scenario(cfg, seed, &mut substream(seed, 0)).unwrap()
    }

    #[test]
    fn single_agent_noiseless_has_full_confidence() {
        let cfg = ExperimentConfig {
            oracle: OracleErrorModel::noiseless(),
            ..ExperimentConfig::default()
        };
        let s = scenario(&ScenarioConfig { agents: 1, ..ScenarioConfig::default() }, 4);
        let out = run_pipeline(&s, Method::Pgc, NoiseLevel(0.0, 0.0), &cfg).unwrap();
        let p = out.poses[0].as_ref().unwrap();
        assert_eq!(p.confidence, 1.0);
        assert!(p.translation_error_m < 1e-9);
        assert!(out.ledger.records.is_empty());
        assert_eq!(out.weights, vec![1.0]);
    }

    #[test]
    fn noiseless_two_agents_need_no_feature_correction() {
        let cfg = ExperimentConfig {
            oracle: OracleErrorModel::noiseless(),
            ..ExperimentConfig::default()
        };
        for seed in 0..3 {
            let s = scenario(&ScenarioConfig::default(), seed);
            let out = run_pipeline(&s, Method::Pgc, NoiseLevel(0.0, 0.0), &cfg).unwrap();
            let d = out.offsets[1].unwrap();
            assert!(d.dx.abs() <= cfg.fsa.step_xy && d.dy.abs() <= cfg.fsa.step_xy, "{d:?}");
            assert!(d.dtheta.abs() <= cfg.fsa.step_theta + 1e-12, "{d:?}");
        }
    }

    #[test]
    fn ledger_accounts_every_message() {
        let cfg = ExperimentConfig::default();
        let s = scenario(&ScenarioConfig { agents: 3, ..ScenarioConfig::default() }, 8);
        let out = run_pipeline(&s, Method::GtNoise, NoiseLevel(1.0, 1.0), &cfg).unwrap();
        let blob = BevGrid::zeros(cfg.grid, 3).byte_len();
        assert_eq!(out.ledger.messages(MessageKind::Features).count(), 2 * s.agents[0].clouds.len());
        assert!(out.ledger.messages(MessageKind::Features).all(|r| r.bytes == blob && r.receiver == 0));
        let pose_bytes: usize = out.ledger.messages(MessageKind::Pose).map(|r| r.bytes).sum();
        assert_eq!(out.ledger.total_bytes(), pose_bytes + 2 * s.agents[0].clouds.len() * blob);
    }

    #[test]
    fn noiseless_pipeline_finds_vehicles() {
        let cfg = ExperimentConfig::default();
        let mut total = 0.0;
        for seed in 0..5 {
            let s = scenario(&ScenarioConfig::default(), seed);
            let out = run_pipeline(&s, Method::GtNoise, NoiseLevel(0.0, 0.0), &cfg).unwrap();
            total += average_precision(&out.detections, &out.ground_truth, 0.3);
        }
        assert!(total / 5.0 > 0.5, "mean AP@0.3 {}", total / 5.0);
    }

    #[test]
    fn pgc_ignores_gnss_noise() {
        let cfg = ExperimentConfig::default();
        let s = scenario(&ScenarioConfig::default(), 2);
        let a = run_pipeline(&s, Method::Pgc, NoiseLevel(0.0, 0.0), &cfg).unwrap();
        let b = run_pipeline(&s, Method::Pgc, NoiseLevel(4.0, 4.0), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fusion_gate_drops_low_confidence_features() {
        let spec = crate::fusion::GridSpec::centered(2, 1, 1.0);
        let a = BevGrid::from_data(spec, 4, vec![1.0, 0.0, 0.1, 0.2, 1.0, 1.0, 0.5, 0.5]).unwrap();
        let b = BevGrid::from_data(spec, 4, vec![0.0, 1.0, 0.9, 0.9, 2.0, 2.0, 0.5, 0.5]).unwrap();
        let f = fuse(&[a.clone(), b.clone()], &[0.8, 0.2]);
        assert_eq!(f.channel(2), &[1.0, 1.0]);
        assert_eq!(f.channel(3), &[0.8, 0.2]);
        // The ego is never gated out, even when its own weight is low.
        let g = fuse(&[a, b], &[0.2, 0.8]);
        assert_eq!(g.channel(2), &[2.0, 2.0]);
        assert_eq!(g.channel(0), &[1.0, 1.0]);
    }
}
