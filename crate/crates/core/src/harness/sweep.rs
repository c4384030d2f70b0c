use super::{
    generate_scenario, map_indexed, run_pipeline, scenario_seed, ExperimentConfig, HarnessError, Method, NoiseLevel,
};
use crate::detection::average_precision_with;
use crate::geometry::seeded_rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scenario_id: String,
    pub method: Method,
    pub sigma_t: f64,
    pub sigma_r: f64,
    pub iou_thr: f64,
    /// `None` when the pipeline failed for this cell.
    pub ap: Option<f64>,
}

/// Mean per-scenario AP for one method, noise level and IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub method: Method,
    pub sigma_t: f64,
    pub sigma_r: f64,
    pub iou_thr: f64,
    pub scenarios: usize,
    pub mean_ap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, method: Method, level: NoiseLevel, iou_thr: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.sigma_t == level.0 && c.sigma_r == level.1 && c.iou_thr == iou_thr)
    }
}

/// Methods whose output does not depend on the GNSS noise level.
fn noise_free(method: Method) -> bool {
    matches!(method, Method::Pgc | Method::NoFusion | Method::Icp | Method::Graph)
}

fn scenario_rows(cfg: &ExperimentConfig, index: usize, methods: &[Method]) -> Vec<SweepRow> {
    let scenario_id = format!("{index:04}");
    let seed = scenario_seed(cfg.seed, index);
    let scenario = generate_scenario(&cfg.scenario, seed, &mut seeded_rng(seed));
    let mut rows = Vec::new();
    for &method in methods {
        // Noise-independent pipelines are run once and reported at every level.
        let mut cached: Option<Vec<Option<f64>>> = None;
        for &level in &cfg.noise_levels {
            let aps = match &cached {
                Some(aps) => aps.clone(),
                None => {
                    let result = scenario
                        .as_ref()
                        .map_err(|e| e.to_string())
                        .and_then(|s| run_pipeline(s, method, level, cfg).map_err(|e| e.to_string()));
                    let aps: Vec<Option<f64>> = match result {
                        Ok(out) => cfg
                            .eval
                            .iou_thresholds
                            .iter()
                            .map(|&thr| Some(average_precision_with(&out.detections, &out.ground_truth, thr, cfg.eval.interpolation)))
                            .collect(),
                        Err(e) => {
                            log::warn!("scenario {scenario_id}: {method} at {} failed: {e}", level.label());
                            vec![None; cfg.eval.iou_thresholds.len()]
                        }
                    };
                    if noise_free(method) {
                        cached = Some(aps.clone());
                    }
                    aps
                }
            };
            for (&iou_thr, ap) in cfg.eval.iou_thresholds.iter().zip(aps) {
                rows.push(SweepRow {
                    scenario_id: scenario_id.clone(),
                    method,
                    sigma_t: level.0,
                    sigma_r: level.1,
                    iou_thr,
                    ap,
                });
            }
        }
    }
    rows
}

/// Runs the pipeline for every scenario, method and GNSS noise level and
/// scores detections against the ego ground truth.
pub fn run_noise_sweep(cfg: &ExperimentConfig) -> Result<SweepReport, HarnessError> {
    cfg.validate()?;
    let methods = cfg.methods_or(&Method::SWEEP);
    let rows: Vec<SweepRow> = map_indexed(cfg.scenarios, cfg.parallel, |i| scenario_rows(cfg, i, &methods))
        .into_iter()
        .flatten()
        .collect();
    let mut cells = Vec::new();
    for &method in &methods {
        for &level in &cfg.noise_levels {
            for &iou_thr in &cfg.eval.iou_thresholds {
                let aps: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.method == method && r.sigma_t == level.0 && r.sigma_r == level.1 && r.iou_thr == iou_thr)
                    .filter_map(|r| r.ap)
                    .collect();
                cells.push(SweepCell {
                    method,
                    sigma_t: level.0,
                    sigma_r: level.1,
                    iou_thr,
                    scenarios: aps.len(),
                    mean_ap: if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 },
                });
            }
        }
    }
    Ok(SweepReport { rows, cells })
}
