//! Point containers and the on-disk point-cloud formats.
//!
//! Two encodings are supported:
//! - ASCII: one `x y z` triple per line (meters), `#` starts a comment line.
//! - Binary: the 8-byte magic `CPALPC01` followed by little-endian `f32` triples.

use super::{GeometryError, Pose};
use nalgebra::Vector3;
use std::io::{BufRead, Read, Write};

pub const POINT_CLOUD_MAGIC: &[u8; 8] = b"CPALPC01";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vector3<f64>> {
        self.points.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vector3::zeros(), |acc, p| acc + p);
        Some(sum / self.points.len() as f64)
    }

    /// Subset by index, in the order given.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud::new(indices.iter().map(|&i| self.points[i]).collect())
    }

    pub fn write_ascii<W: Write>(&self, mut w: W) -> Result<(), GeometryError> {
        writeln!(w, "# x y z (meters)")?;
        for p in &self.points {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        Ok(())
    }

    pub fn read_ascii<R: BufRead>(r: R) -> Result<PointCloud, GeometryError> {
        let mut points = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = trimmed
                .split_whitespace()
                .map(|tok| tok.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| GeometryError::Parse {
                    line: lineno + 1,
                    reason: format!("not a float triple: {trimmed:?}"),
                })?;
            if vals.len() != 3 {
                return Err(GeometryError::Parse {
                    line: lineno + 1,
                    reason: format!("expected 3 values, found {}", vals.len()),
                });
            }
            let p = Vector3::new(vals[0], vals[1], vals[2]);
            if !p.iter().all(|v| v.is_finite()) {
                return Err(GeometryError::NonFinite);
            }
            points.push(p);
        }
        Ok(PointCloud::new(points))
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 12 * self.points.len());
        out.extend_from_slice(POINT_CLOUD_MAGIC);
        for p in &self.points {
            for v in p.iter() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), GeometryError> {
        w.write_all(&self.to_binary())?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<PointCloud, GeometryError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_binary(&buf)
    }

    pub fn from_binary(buf: &[u8]) -> Result<PointCloud, GeometryError> {
        if buf.len() < 8 || &buf[..8] != POINT_CLOUD_MAGIC {
            return Err(GeometryError::BadMagic);
        }
        let body = &buf[8..];
        if !body.len().is_multiple_of(12) {
            return Err(GeometryError::Truncated(body.len()));
        }
        let mut points = Vec::with_capacity(body.len() / 12);
        for chunk in body.chunks_exact(12) {
            let f = |i: usize| f32::from_le_bytes(chunk[i..i + 4].try_into().unwrap()) as f64;
            let p = Vector3::new(f(0), f(4), f(8));
            if !p.iter().all(|v| v.is_finite()) {
                return Err(GeometryError::NonFinite);
            }
            points.push(p);
        }
        Ok(PointCloud::new(points))
    }
}

impl FromIterator<Vector3<f64>> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Vector3<f64>>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

/// Maps every point through `R x + t`.
pub fn transform_points(pose: &Pose, cloud: &PointCloud) -> PointCloud {
    cloud.points.iter().map(|p| pose.transform_point(p)).collect()
}
