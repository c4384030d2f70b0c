use super::boxes::{iou_bev_unchecked, RotatedBox3D};
use super::metrics::score_order;
use super::{Detection, DetectionError, EvalConfig};
use crate::fusion::BevGrid;
use crate::geometry::normalize_angle;
use serde::{Deserialize, Serialize};

/// Number of per-cell outputs: objectness then `(dx, dy, z, h, w, l, theta)`.
pub const HEAD_OUTPUTS: usize = 8;

/// Dense per-cell linear head. `weight` is `[HEAD_OUTPUTS][in_channels]`.
///
/// The score is the objectness output clamped to `[0, 1]`; box centers are
/// offsets from the cell center, extents must come out positive or the cell
/// is skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeHead {
    pub in_channels: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DecodeHead {
    pub fn zeros(in_channels: usize) -> Self {
        Self {
            in_channels,
            weight: vec![0.0; HEAD_OUTPUTS * in_channels],
            bias: vec![0.0; HEAD_OUTPUTS],
        }
    }

    pub fn set_weight(&mut self, out: usize, ch: usize, v: f64) {
        self.weight[out * self.in_channels + ch] = v;
    }

    fn validate(&self) -> Result<(), DetectionError> {
        if self.weight.len() != HEAD_OUTPUTS * self.in_channels || self.bias.len() != HEAD_OUTPUTS {
            return Err(DetectionError::ShapeMismatch(format!(
                "head tensors have {} weights and {} biases for {} channels",
                self.weight.len(),
                self.bias.len(),
                self.in_channels
            )));
        }
        Ok(())
    }

    fn cell_outputs(&self, grid: &BevGrid, row: usize, col: usize) -> [f64; HEAD_OUTPUTS] {
        let mut out = [0.0; HEAD_OUTPUTS];
        for (o, slot) in out.iter_mut().enumerate() {
            let w = &self.weight[o * self.in_channels..(o + 1) * self.in_channels];
            *slot = self.bias[o] + (0..self.in_channels).map(|c| w[c] * grid.get(c, row, col)).sum::<f64>();
        }
        out
    }
}

/// Greedy suppression: keep the best-scoring box, drop everything overlapping it by more than `iou_thr`.
pub fn nms(dets: &[Detection], iou_thr: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in score_order(dets) {
        if kept.iter().all(|k| iou_bev_unchecked(&k.bbox, &dets[i].bbox) <= iou_thr) {
            kept.push(dets[i]);
        }
    }
    kept
}

/// Runs the head over every cell, thresholds by score and suppresses duplicates.
pub fn decode_head(grid: &BevGrid, head: &DecodeHead, cfg: &EvalConfig) -> Result<Vec<Detection>, DetectionError> {
    head.validate()?;
    if grid.channels != head.in_channels {
        return Err(DetectionError::ShapeMismatch(format!(
            "grid has {} channels, head expects {}",
            grid.channels, head.in_channels
        )));
    }
    let mut raw = Vec::new();
    for row in 0..grid.spec.height {
        for col in 0..grid.spec.width {
            let o = head.cell_outputs(grid, row, col);
            let score = o[0].clamp(0.0, 1.0);
            if !(score > cfg.score_threshold) {
                continue;
            }
            let (cx, cy) = grid.spec.cell_center(row, col);
            let bbox = RotatedBox3D {
                x: cx + o[1],
                y: cy + o[2],
                z: o[3],
                h: o[4],
                w: o[5],
                l: o[6],
                theta: normalize_angle(o[7]),
            };
            if bbox.validate().is_ok() {
                raw.push(Detection { bbox, score });
            }
        }
    }
    Ok(nms(&raw, cfg.nms_iou_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::GridSpec;

    fn grid() -> BevGrid {
        let spec = GridSpec::centered(10, 8, 1.0);
        let mut g = BevGrid::zeros(spec, 2);
        for k in 0..spec.cells() {
            g.data[k] = (k % 7) as f64 * 0.1;
        }
        g
    }

    #[test]
    fn zero_head_detects_nothing() {
        let cfg = EvalConfig { score_threshold: 1e-9, ..EvalConfig::default() };
        assert!(decode_head(&grid(), &DecodeHead::zeros(2), &cfg).unwrap().is_empty());
    }

    #[test]
    fn channel_mismatch_is_error() {
        assert!(decode_head(&grid(), &DecodeHead::zeros(3), &EvalConfig::default()).is_err());
        let mut bad = DecodeHead::zeros(2);
        bad.bias.pop();
        assert!(decode_head(&grid(), &bad, &EvalConfig::default()).is_err());
    }

    #[test]
    fn recovers_single_encoded_box() {
        // Channel 1 is a one-hot marker at (row 3, col 6).
        let mut g = grid();
        g.channel_mut(1).iter_mut().for_each(|v| *v = 0.0);
        g.set(1, 3, 6, 1.0);
        let mut head = DecodeHead::zeros(2);
        let target = [0.9, 0.25, -0.3, 0.8, 1.6, 1.9, 4.2, 0.4];
        for (o, &t) in target.iter().enumerate() {
            head.set_weight(o, 1, t);
        }
        let dets = decode_head(&g, &head, &EvalConfig::default()).unwrap();
        assert_eq!(dets.len(), 1);
        let (cx, cy) = g.spec.cell_center(3, 6);
        let b = dets[0].bbox;
        assert_eq!(dets[0].score, 0.9);
        assert_eq!(b.to_array(), [cx + 0.25, cy - 0.3, 0.8, 1.6, 1.9, 4.2, 0.4]);
    }

    #[test]
    fn suppression_keeps_higher_score() {
        let a = RotatedBox3D::new(0.0, 0.0, 0.0, 1.5, 2.0, 4.0, 0.0).unwrap();
        // Shifting s along the 4 m length gives IoU (4 - s) / (4 + s).
        let shift = 4.0 * (1.0 - 0.9) / (1.0 + 0.9);
        let b = RotatedBox3D { x: shift, ..a };
        assert!((iou_bev_unchecked(&a, &b) - 0.9).abs() < 1e-12);
        let kept = nms(&[Detection { bbox: a, score: 0.6 }, Detection { bbox: b, score: 0.8 }], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.8);
        let far = RotatedBox3D { x: 10.0, ..a };
        assert_eq!(nms(&[Detection { bbox: a, score: 0.6 }, Detection { bbox: far, score: 0.8 }], 0.5).len(), 2);
    }
}
