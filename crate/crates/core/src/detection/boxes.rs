use super::DetectionError;
use crate::geometry::{normalize_angle, Pose};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Rotated 3D box. `l` runs along the heading, `w` across it, `h` is vertical.
///
/// Serializes as `[x, y, z, h, w, l, theta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 7]", into = "[f64; 7]")]
pub struct RotatedBox3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub h: f64,
    pub w: f64,
    pub l: f64,
    pub theta: f64,
}

impl RotatedBox3D {
    pub fn new(x: f64, y: f64, z: f64, h: f64, w: f64, l: f64, theta: f64) -> Result<Self, DetectionError> {
        let b = Self {
            x,
            y,
            z,
            h,
            w,
            l,
            theta: normalize_angle(theta),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        let all = self.to_array();
        if all.iter().any(|v| !v.is_finite()) {
            return Err(DetectionError::NonFinite);
        }
        if !(self.h > 0.0 && self.w > 0.0 && self.l > 0.0) {
            return Err(DetectionError::DegenerateBox { h: self.h, w: self.w, l: self.l });
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.x, self.y, self.z, self.h, self.w, self.l, self.theta]
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn footprint_area(&self) -> f64 {
        self.w * self.l
    }

    /// Footprint corners, counter-clockwise.
    pub fn corners_bev(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.theta.sin_cos();
        let (hl, hw) = (0.5 * self.l, 0.5 * self.w);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(a, b)| [self.x + c * a - s * b, self.y + s * a + c * b])
    }

    /// Footprint corners at the box's center height.
    pub fn corners_3d(&self) -> [Vector3<f64>; 4] {
        self.corners_bev().map(|[x, y]| Vector3::new(x, y, self.z))
    }

    /// The same physical box expressed after applying `pose` (heading follows the pose yaw).
    pub fn transformed(&self, pose: &Pose) -> RotatedBox3D {
        let c = pose.transform_point(&self.center());
        RotatedBox3D {
            x: c.x,
            y: c.y,
            z: c.z,
            theta: normalize_angle(self.theta + pose.yaw()),
            ..*self
        }
    }
}

impl From<RotatedBox3D> for [f64; 7] {
    fn from(b: RotatedBox3D) -> Self {
        b.to_array()
    }
}

impl TryFrom<[f64; 7]> for RotatedBox3D {
    type Error = DetectionError;

    fn try_from(a: [f64; 7]) -> Result<Self, Self::Error> {
        RotatedBox3D::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6])
    }
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc.abs()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Sutherland-Hodgman clipping of `subject` by the convex CCW polygon `clip`.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let p = input[j];
            let q = input[(j + 1) % input.len()];
            let (dp, dq) = (cross(a, b, p), cross(a, b, q));
            if dp >= 0.0 {
                out.push(p);
            }
            if (dp >= 0.0) != (dq >= 0.0) {
                let t = dp / (dp - dq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

fn interval_overlap(c0: f64, h0: f64, c1: f64, h1: f64) -> f64 {
    ((c0 + h0).min(c1 + h1) - (c0 - h0).max(c1 - h1)).max(0.0)
}

/// Footprint IoU without validation; degenerate boxes give 0.
pub(crate) fn iou_bev_unchecked(a: &RotatedBox3D, b: &RotatedBox3D) -> f64 {
    let (area_a, area_b) = (a.footprint_area(), b.footprint_area());
    if !(area_a > 0.0 && area_b > 0.0) {
        return 0.0;
    }
    let inter = if a.theta == 0.0 && b.theta == 0.0 {
        interval_overlap(a.x, 0.5 * a.l, b.x, 0.5 * b.l) * interval_overlap(a.y, 0.5 * a.w, b.y, 0.5 * b.w)
    } else {
        let poly = clip_convex(&a.corners_bev(), &b.corners_bev());
        if poly.len() < 3 {
            0.0
        } else {
            polygon_area(&poly)
        }
    };
    let union = area_a + area_b - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection over union of the two footprints.
pub fn rotated_iou_bev(a: &RotatedBox3D, b: &RotatedBox3D) -> Result<f64, DetectionError> {
    a.validate()?;
    b.validate()?;
    Ok(iou_bev_unchecked(a, b))
}
