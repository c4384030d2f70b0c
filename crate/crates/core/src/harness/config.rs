use super::HarnessError;
use crate::baselines::{GraphMatchConfig, IcpConfig};
use crate::detection::EvalConfig;
use crate::fusion::{FsaSearch, GridSpec};
use crate::pgc::{OracleErrorModel, RansacConfig};
use crate::temporal::ViTConfig;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Alignment or fusion strategy under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Per-agent pose from scene-coordinate regression plus RANSAC, with feature alignment.
    Pgc,
    Icp,
    Graph,
    /// Perturbed ground-truth poses, coarse alignment only.
    GtNoise,
    /// Perturbed ground-truth poses with confidence embedding and feature alignment.
    GtNoisePastat,
    NoFusion,
}

impl Method {
    pub const ALIGNMENT: [Method; 4] = [Method::Pgc, Method::Icp, Method::Graph, Method::GtNoise];
    pub const SWEEP: [Method; 4] = [Method::NoFusion, Method::GtNoise, Method::GtNoisePastat, Method::Pgc];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Pgc => "pgc",
            Method::Icp => "icp",
            Method::Graph => "graph",
            Method::GtNoise => "gt-noise",
            Method::GtNoisePastat => "gt-noise-pastat",
            Method::NoFusion => "no-fusion",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Method::Pgc,
            Method::Icp,
            Method::Graph,
            Method::GtNoise,
            Method::GtNoisePastat,
            Method::NoFusion,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| HarnessError::Config(format!("unknown method {s:?}")))
    }
}

/// Translation sigma (m) and yaw sigma (deg) of a GNSS perturbation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel(pub f64, pub f64);

impl NoiseLevel {
    pub fn sigma_t(&self) -> f64 {
        self.0
    }

    pub fn sigma_r(&self) -> f64 {
        self.1
    }

    pub fn label(&self) -> String {
        format!("{:.1}/{:.1}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub agents: usize,
    pub objects: usize,
    /// When set, exactly this many objects are visible to every agent and
    /// each remaining object to exactly one agent.
    pub co_visible: Option<usize>,
    /// Objects are placed in a square of this half-size around the scene center.
    pub object_area: f64,
    pub min_object_spacing: f64,
    /// Ego offset from the scene center, per axis.
    pub ego_jitter: f64,
    pub neighbor_distance: [f64; 2],
    pub sensing_range: f64,
    /// Chance that an in-range object is seen by an agent (random visibility mode).
    pub visibility_prob: f64,
    pub points_per_object: usize,
    pub ground_points: usize,
    /// Standard deviation of the small yaw deviation from the road direction (rad).
    pub yaw_jitter: f64,
    /// Scene center is drawn in a square of this half-size in the world frame.
    pub world_extent: f64,
    pub frames: usize,
    pub max_retries: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            agents: 2,
            objects: 10,
            co_visible: None,
            object_area: 15.0,
            min_object_spacing: 5.0,
            ego_jitter: 2.0,
            neighbor_distance: [8.0, 14.0],
            sensing_range: 40.0,
            visibility_prob: 0.7,
            points_per_object: 80,
            ground_points: 150,
            yaw_jitter: 0.03,
            world_extent: 200.0,
            frames: 2,
            max_retries: 2000,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(format!("scenario: {m}")));
        if !(1..=4).contains(&self.agents) {
            return bad("agents must be between 1 and 4");
        }
        if let Some(k) = self.co_visible {
            if k > self.objects {
                return bad("co_visible exceeds the object count");
            }
        }
        if !(self.object_area > 0.0 && self.sensing_range > 0.0 && self.min_object_spacing >= 0.0) {
            return bad("areas and ranges must be positive");
        }
        if !(self.neighbor_distance[0] > 0.0 && self.neighbor_distance[0] <= self.neighbor_distance[1]) {
            return bad("neighbor_distance must be an increasing positive pair");
        }
        if !(0.0..=1.0).contains(&self.visibility_prob) {
            return bad("visibility_prob must lie in [0, 1]");
        }
        if self.frames == 0 || self.max_retries == 0 {
            return bad("frames and max_retries must be positive");
        }
        if !(self.ego_jitter >= 0.0 && self.yaw_jitter >= 0.0 && self.world_extent >= 0.0) {
            return bad("jitters and world extent must be non-negative");
        }
        Ok(())
    }
}

/// A feature-alignment correction is applied only when its correlation score is
/// at least `min_score` and beats the uncorrected score by `min_gain`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsaGate {
    pub min_gain: f64,
    pub min_score: f64,
}

impl Default for FsaGate {
    fn default() -> Self {
        Self {
            min_gain: 0.1,
            min_score: 0.25,
        }
    }
}

/// Everything an experiment run depends on besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenarios: usize,
    pub scenario: ScenarioConfig,
    /// Co-visible counts for the consensus-sparsity family of the alignment
    /// benchmark; empty means one family using `scenario.co_visible`.
    pub co_visible_family: Vec<usize>,
    /// Objects seen by a single agent, per agent, in each family scenario.
    pub family_exclusive: usize,
    pub methods: Vec<Method>,
    pub noise_levels: Vec<NoiseLevel>,
    /// Perturbation used by the `gt-noise` row of the alignment benchmark.
    pub align_noise: NoiseLevel,
    /// Translation error (m) below which an alignment counts as a success.
    pub success_threshold: f64,
    pub oracle: OracleErrorModel,
    pub ransac: RansacConfig,
    pub icp: IcpConfig,
    pub graph: GraphMatchConfig,
    pub grid: GridSpec,
    pub fsa: FsaSearch,
    pub fsa_gate: FsaGate,
    /// Points at or below this height count as ground and are not rasterized.
    pub ground_clearance: f64,
    pub vit: ViTConfig,
    pub eval: EvalConfig,
    pub out_dir: Option<String>,
    /// Measure alignment wall time and write it to a separate timing file.
    pub timing: bool,
    /// Worker threads; 0 or 1 runs sequentially.
    pub parallel: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenarios: 100,
            scenario: ScenarioConfig::default(),
            co_visible_family: Vec::new(),
            family_exclusive: 3,
            methods: Vec::new(),
            noise_levels: [0.0, 1.0, 2.0, 3.0, 4.0].iter().map(|&s| NoiseLevel(s, s)).collect(),
            align_noise: NoiseLevel(0.0, 0.0),
            success_threshold: 3.0,
            oracle: OracleErrorModel::default(),
            ransac: RansacConfig::default(),
            icp: IcpConfig::default(),
            graph: GraphMatchConfig {
                edge_consistency_eps: 0.1,
                ..GraphMatchConfig::default()
            },
            grid: GridSpec::centered(20, 20, 1.0),
            fsa: FsaSearch {
                step_xy: 0.5,
                step_theta: 2f64.to_radians(),
                ..FsaSearch::default()
            },
            fsa_gate: FsaGate::default(),
            ground_clearance: 0.3,
            vit: ViTConfig::default(),
            eval: EvalConfig::default(),
            out_dir: None,
            timing: false,
            parallel: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg_err = |e: String| HarnessError::Config(e);
        self.scenario.validate()?;
        if self.noise_levels.iter().chain([&self.align_noise]).any(|l| !(l.0 >= 0.0 && l.1 >= 0.0)) {
            return Err(cfg_err("noise levels must be non-negative".into()));
        }
        if !(self.fsa_gate.min_gain >= 0.0 && self.ground_clearance.is_finite()) {
            return Err(cfg_err("fsa_gate.min_gain must be non-negative and ground_clearance finite".into()));
        }
        if !(self.success_threshold > 0.0) {
            return Err(cfg_err("success_threshold must be positive".into()));
        }
        self.oracle.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.ransac.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.icp.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.graph.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.grid.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.vit.validate().map_err(|e| cfg_err(e.to_string()))?;
        if self.vit.in_channels != super::pipeline::FUSED_CHANNELS {
            return Err(cfg_err(format!(
                "vit.in_channels must be {} (fused BEV channels)",
                super::pipeline::FUSED_CHANNELS
            )));
        }
        self.eval.validate().map_err(|e| cfg_err(e.to_string()))?;
        if !(self.fsa.step_xy > 0.0 && self.fsa.step_theta > 0.0 && self.fsa.range_xy >= 0.0 && self.fsa.range_theta >= 0.0) {
            return Err(cfg_err("fsa steps must be positive and ranges non-negative".into()));
        }
        Ok(())
    }

    /// Methods to run for a command, falling back to its defaults.
    pub fn methods_or(&self, defaults: &[Method]) -> Vec<Method> {
        if self.methods.is_empty() {
            defaults.to_vec()
        } else {
            self.methods.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_validates() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn schema_rejects_unknown_and_invalid_fields() {
        assert!(ExperimentConfig::from_json(r#"{"sed": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"ransac": {"iterations": 3}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"methods": ["magic"]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"scenario": {"agents": 0}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"noise_levels": [[-1, 0]]}"#).is_err());
        let ok = ExperimentConfig::from_json(r#"{"methods": ["pgc", "gt-noise-pastat"], "noise_levels": [[0, 0], [2, 2]]}"#)
            .unwrap();
        assert_eq!(ok.methods, vec![Method::Pgc, Method::GtNoisePastat]);
        assert_eq!(ok.noise_levels[1].label(), "2.0/2.0");
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALIGNMENT.iter().chain(&Method::SWEEP) {
            assert_eq!(m.name().parse::<Method>().unwrap(), *m);
        }
        assert!("x".parse::<Method>().is_err());
    }
}
