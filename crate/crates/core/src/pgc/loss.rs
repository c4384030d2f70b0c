use super::{PgcError, SceneCoordPrediction};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Norm used for the per-point coordinate error `u_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNorm {
    #[default]
    L1,
    L2,
}

/// `||pred - gt||_1`.
pub fn coordinate_error(pred: &Vector3<f64>, gt: &Vector3<f64>) -> f64 {
    coordinate_error_with(ErrorNorm::L1, pred, gt)
}

pub fn coordinate_error_with(norm: ErrorNorm, pred: &Vector3<f64>, gt: &Vector3<f64>) -> f64 {
    let d = pred - gt;
    match norm {
        ErrorNorm::L1 => d.x.abs() + d.y.abs() + d.z.abs(),
        ErrorNorm::L2 => d.norm(),
    }
}

/// Mean over points of `u_i + |u_i - eps_i|`.
pub fn regression_loss(pred: &SceneCoordPrediction) -> Result<f64, PgcError> {
    regression_loss_with(ErrorNorm::L1, pred)
}

pub fn regression_loss_with(norm: ErrorNorm, pred: &SceneCoordPrediction) -> Result<f64, PgcError> {
    let gt = pred.gt_world.as_ref().ok_or(PgcError::MissingGroundTruth)?;
    if gt.len() != pred.predicted_world.len() {
        return Err(PgcError::LengthMismatch(gt.len(), pred.predicted_world.len()));
    }
    if gt.is_empty() {
        return Err(PgcError::EmptyCloud);
    }
    let total: f64 = pred
        .predicted_world
        .iter()
        .zip(gt.iter())
        .zip(&pred.predicted_error)
        .map(|((y, y_gt), eps)| {
            let u = coordinate_error_with(norm, y, y_gt);
            u + (u - eps).abs()
        })
        .sum();
    Ok(total / gt.len() as f64)
}

/// `1 / (1 + eps^2)`.
pub fn confidence_from_error(eps: f64) -> Result<f64, PgcError> {
    if !(eps >= 0.0) {
        return Err(PgcError::NegativeError(eps));
    }
    Ok(1.0 / (1.0 + eps * eps))
}
