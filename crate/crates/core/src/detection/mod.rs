//! Rotated boxes, footprint IoU, average precision, detection losses and a
//! dense toy decode head.

mod boxes;
mod head;
mod loss;
mod metrics;

pub use boxes::{rotated_iou_bev, RotatedBox3D};
pub use head::{decode_head, nms, DecodeHead, HEAD_OUTPUTS};
pub use loss::{box_regression_loss, focal_loss, smooth_l1, smooth_l1_grad, FOCAL_ALPHA, FOCAL_GAMMA};
pub use metrics::{average_precision, average_precision_with, batch_average_precision, precision_recall};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DetectionError {
    #[error("box extents must be positive (h={h}, w={w}, l={l})")]
    DegenerateBox { h: f64, w: f64, l: f64 },
    #[error("non-finite box parameter")]
    NonFinite,
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: RotatedBox3D,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: RotatedBox3D, score: f64) -> Result<Self, DetectionError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(DetectionError::InvalidScore(score));
        }
        bbox.validate()?;
        Ok(Self { bbox, score })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    #[default]
    AllPoint,
    ElevenPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub score_threshold: f64,
    pub nms_iou_threshold: f64,
    pub interpolation: ApInterpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: vec![0.3, 0.5, 0.7],
            score_threshold: 0.1,
            nms_iou_threshold: 0.5,
            interpolation: ApInterpolation::AllPoint,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if self.iou_thresholds.is_empty() || self.iou_thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(DetectionError::InvalidConfig("IoU thresholds must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(DetectionError::InvalidConfig("score threshold must lie in [0, 1]".into()));
        }
        if !(self.nms_iou_threshold > 0.0 && self.nms_iou_threshold <= 1.0) {
            return Err(DetectionError::InvalidConfig("suppression threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One line of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub scenario_id: String,
    pub method: String,
    pub iou_thr: f64,
    pub ap: f64,
}

impl EvalRow {
    pub const CSV_HEADER: &'static str = "scenario_id,method,iou_thr,ap";

    pub fn to_csv(&self) -> String {
        format!("{},{},{},{}", self.scenario_id, self.method, self.iou_thr, self.ap)
    }
}

/// AP rows for every configured IoU threshold.
pub fn evaluate(
    scenario_id: &str,
    method: &str,
    dets: &[Detection],
    gts: &[RotatedBox3D],
    cfg: &EvalConfig,
) -> Vec<EvalRow> {
    cfg.iou_thresholds
        .iter()
        .map(|&thr| EvalRow {
            scenario_id: scenario_id.to_string(),
            method: method.to_string(),
            iou_thr: thr,
            ap: average_precision_with(dets, gts, thr, cfg.interpolation),
        })
        .collect()
}
