use super::boxes::RotatedBox3D;
use crate::geometry::normalize_angle;

const P_CLAMP: f64 = 1e-7;

/// Huber-style loss with unit transition point.
pub fn smooth_l1(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

pub fn smooth_l1_grad(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    if d.abs() < 1.0 {
        d
    } else {
        d.signum()
    }
}

/// Binary focal loss `-alpha_t (1 - p_t)^gamma ln p_t`, with `p` clamped to `[1e-7, 1 - 1e-7]`.
pub fn focal_loss(p: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    let (pt, at) = if positive { (p, alpha) } else { (1.0 - p, 1.0 - alpha) };
    -at * (1.0 - pt).powf(gamma) * pt.ln()
}

pub const FOCAL_ALPHA: f64 = 0.25;
pub const FOCAL_GAMMA: f64 = 2.0;

/// Sum of smooth-L1 over the seven box parameters; the yaw residual is wrapped.
pub fn box_regression_loss(pred: &RotatedBox3D, target: &RotatedBox3D) -> f64 {
    let (a, b) = (pred.to_array(), target.to_array());
    let mut total: f64 = (0..6).map(|k| smooth_l1(a[k], b[k])).sum();
    total += smooth_l1(normalize_angle(a[6] - b[6]), 0.0);
    total
}
