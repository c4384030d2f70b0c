use super::pipeline::{box_alignment, gnss_pose, pgc_estimate};
use super::{generate_scenario, map_indexed, scenario_seed, ExperimentConfig, HarnessError, Method, Scenario, ScenarioConfig};
use crate::geometry::{pose_error, relative, seeded_rng, Pose};
use crate::pgc::PoseMessage;
use serde::Serialize;
use std::time::Instant;

/// One alignment of a neighbor to the ego.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentRow {
    pub scenario_id: String,
    pub co_visible: Option<usize>,
    pub neighbor: usize,
    pub method: Method,
    /// `None` when the method returned no pose.
    pub translation_error_m: Option<f64>,
    pub rotation_error_deg: Option<f64>,
    pub success: bool,
    pub bytes: usize,
    /// Median wall time of the alignment call, when timing is enabled. Kept
    /// out of the main artifacts so they stay reproducible.
    #[serde(skip_serializing)]
    pub time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub co_visible: Option<usize>,
    pub alignments: usize,
    pub successes: usize,
    pub success_rate_pct: f64,
    pub mean_bytes: f64,
    pub log2_mean_bytes: f64,
    #[serde(skip_serializing)]
    pub mean_time_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub rows: Vec<AlignmentRow>,
    pub summaries: Vec<MethodSummary>,
}

impl AlignmentReport {
    pub fn summary(&self, method: Method, co_visible: Option<usize>) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method && s.co_visible == co_visible)
    }
}

struct Family {
    co_visible: Option<usize>,
    scenario: ScenarioConfig,
}

fn families(cfg: &ExperimentConfig) -> Vec<Family> {
    if cfg.co_visible_family.is_empty() {
        return vec![Family {
            co_visible: cfg.scenario.co_visible,
            scenario: cfg.scenario.clone(),
        }];
    }
    cfg.co_visible_family
        .iter()
        .map(|&k| Family {
            co_visible: Some(k),
            scenario: ScenarioConfig {
                co_visible: Some(k),
                objects: k + cfg.family_exclusive * cfg.scenario.agents,
                ..cfg.scenario.clone()
            },
        })
        .collect()
}

/// Relative pose estimate (neighbor frame to ego frame) and the bytes the neighbor sent.
fn estimate(scenario: &Scenario, nbr: usize, method: Method, cfg: &ExperimentConfig) -> (Result<Pose, HarnessError>, usize) {
    match method {
        Method::Pgc => {
            let ego = pgc_estimate(scenario, 0, cfg);
            let other = pgc_estimate(scenario, nbr, cfg);
            let bytes = other.as_ref().map(|e| e.message().byte_len()).unwrap_or(0);
            let rel = match (ego, other) {
                (Ok(a), Ok(b)) => Ok(relative(&a.pose, &b.pose)),
                (Err(e), _) | (_, Err(e)) => Err(e.into()),
            };
            (rel, bytes)
        }
        Method::GtNoise | Method::GtNoisePastat => {
            let a = gnss_pose(scenario, 0, cfg.align_noise);
            let b = gnss_pose(scenario, nbr, cfg.align_noise);
            let bytes = PoseMessage::from_pose(&b, 1.0, 0.0, 1.0).byte_len();
            (Ok(relative(&a, &b)), bytes)
        }
        Method::Graph | Method::Icp => {
            let bytes = scenario.observed_boxes(nbr).byte_len();
            (box_alignment(scenario, nbr, method, cfg), bytes)
        }
        Method::NoFusion => (Err(HarnessError::Config("no-fusion does not align".into())), 0),
    }
}

fn timed(scenario: &Scenario, nbr: usize, method: Method, cfg: &ExperimentConfig) -> f64 {
    let mut t: Vec<f64> = (0..3)
        .map(|_| {
            let start = Instant::now();
            let _ = std::hint::black_box(estimate(scenario, nbr, method, cfg));
            start.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[1]
}

fn rows_for_scenario(
    cfg: &ExperimentConfig,
    family: &Family,
    index: usize,
    seed: u64,
    methods: &[Method],
) -> Vec<AlignmentRow> {
    let scenario_id = format!("{index:04}");
    let row = |neighbor: usize, method: Method| AlignmentRow {
        scenario_id: scenario_id.clone(),
        co_visible: family.co_visible,
        neighbor,
        method,
        translation_error_m: None,
        rotation_error_deg: None,
        success: false,
        bytes: 0,
        time_s: None,
    };
    let scenario = match generate_scenario(&family.scenario, seed, &mut seeded_rng(seed)) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("scenario {scenario_id}: generation failed: {e}");
            return (1..family.scenario.agents)
                .flat_map(|n| methods.iter().map(move |&m| (n, m)))
                .map(|(n, m)| row(n, m))
                .collect();
        }
    };
    let mut out = Vec::new();
    for nbr in 1..scenario.agents.len() {
        let gt = relative(&scenario.agents[0].gt_pose, &scenario.agents[nbr].gt_pose);
        for &method in methods {
            let (est, bytes) = estimate(&scenario, nbr, method, cfg);
            let mut r = row(nbr, method);
            r.bytes = bytes;
            match est {
                Ok(pose) => {
                    let (t, rot) = pose_error(&pose, &gt);
                    r.translation_error_m = Some(t);
                    r.rotation_error_deg = Some(rot);
                    r.success = t < cfg.success_threshold;
                }
                Err(e) => log::debug!("scenario {scenario_id}: {method} failed for agent {nbr}: {e}"),
            }
            if cfg.timing {
                r.time_s = Some(timed(&scenario, nbr, method, cfg));
            }
            out.push(r);
        }
    }
    out
}

fn summarize(rows: &[AlignmentRow], method: Method, co_visible: Option<usize>) -> MethodSummary {
    let sel: Vec<&AlignmentRow> = rows.iter().filter(|r| r.method == method && r.co_visible == co_visible).collect();
    let n = sel.len();
    let successes = sel.iter().filter(|r| r.success).count();
    let mean = |v: &mut dyn Iterator<Item = f64>| {
        let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    };
    let mean_bytes = mean(&mut sel.iter().map(|r| r.bytes as f64));
    let times: Vec<f64> = sel.iter().filter_map(|r| r.time_s).collect();
    MethodSummary {
        method,
        co_visible,
        alignments: n,
        successes,
        success_rate_pct: if n == 0 { 0.0 } else { 100.0 * successes as f64 / n as f64 },
        mean_bytes,
        log2_mean_bytes: if mean_bytes > 0.0 { mean_bytes.log2() } else { 0.0 },
        mean_time_s: (!times.is_empty()).then(|| mean(&mut times.iter().copied())),
    }
}

/// Aligns every neighbor to the ego with each method over a seeded scenario
/// set (one set per co-visible count when a family is configured).
pub fn run_alignment_benchmark(cfg: &ExperimentConfig) -> Result<AlignmentReport, HarnessError> {
    cfg.validate()?;
    let methods = cfg.methods_or(&Method::ALIGNMENT);
    if methods.contains(&Method::NoFusion) {
        return Err(HarnessError::Config("no-fusion is not an alignment method".into()));
    }
    let fams = families(cfg);
    for f in &fams {
        f.scenario.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..fams.len()).flat_map(|f| (0..cfg.scenarios).map(move |i| (f, i))).collect();
    let per_job = map_indexed(jobs.len(), cfg.parallel, |j| {
        let (f, i) = jobs[j];
        let seed = scenario_seed(cfg.seed, f * cfg.scenarios + i);
        rows_for_scenario(cfg, &fams[f], i, seed, &methods)
    });
    let rows: Vec<AlignmentRow> = per_job.into_iter().flatten().collect();
    let summaries = fams
        .iter()
        .flat_map(|f| methods.iter().map(move |&m| (m, f.co_visible)))
        .map(|(m, k)| summarize(&rows, m, k))
        .collect();
    Ok(AlignmentReport { rows, summaries })
}
