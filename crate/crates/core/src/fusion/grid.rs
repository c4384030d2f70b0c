//! BEV rasters: layout, binary blob format, rasterization and rigid warping.

use super::FusionError;
use crate::geometry::{PointCloud, Pose2D};
use serde::{Deserialize, Serialize};

pub const BEV_GRID_MAGIC: &[u8; 8] = b"CPALBG01";
/// Magic + H, W, C (u32) + resolution, origin x, origin y (f64).
pub const BEV_HEADER_LEN: usize = 8 + 3 * 4 + 3 * 8;

/// Cell `(row, col)` has its center at `origin + (col, row) * resolution`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: [f64; 2],
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::centered(128, 128, 0.5)
    }
}

impl GridSpec {
    /// Grid whose geometric center sits on the frame origin.
    pub fn centered(width: usize, height: usize, resolution: f64) -> Self {
        Self {
            width,
            height,
            resolution,
            origin: [
                -(width as f64 - 1.0) * 0.5 * resolution,
                -(height as f64 - 1.0) * 0.5 * resolution,
            ],
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if self.width == 0 || self.height == 0 || !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(FusionError::InvalidSpec(format!("{self:?}")));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(FusionError::InvalidSpec("non-finite origin".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin[0] + col as f64 * self.resolution,
            self.origin[1] + row as f64 * self.resolution,
        )
    }

    /// Continuous `(col, row)` coordinates of a frame position.
    pub fn to_index(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin[0]) / self.resolution,
            (y - self.origin[1]) / self.resolution,
        )
    }

    /// Nearest cell, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (u, v) = self.to_index(x, y);
        let c = (u + 0.5).floor();
        let r = (v + 0.5).floor();
        if c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height {
            Some((r as usize, c as usize))
        } else {
            None
        }
    }
}

/// `C` planes of `H x W` values, stored channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub spec: GridSpec,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl BevGrid {
    pub fn zeros(spec: GridSpec, channels: usize) -> Self {
        Self {
            spec,
            channels,
            data: vec![0.0; spec.cells() * channels],
        }
    }

    pub fn from_data(spec: GridSpec, channels: usize, data: Vec<f64>) -> Result<Self, FusionError> {
        if data.len() != spec.cells() * channels {
            return Err(FusionError::ShapeMismatch(format!(
                "{} values for {}x{}x{}",
                data.len(),
                spec.height,
                spec.width,
                channels
            )));
        }
        Ok(Self { spec, channels, data })
    }

    #[inline]
    pub fn index(&self, ch: usize, row: usize, col: usize) -> usize {
        (ch * self.spec.height + row) * self.spec.width + col
    }

    #[inline]
    pub fn get(&self, ch: usize, row: usize, col: usize) -> f64 {
        self.data[self.index(ch, row, col)]
    }

    #[inline]
    pub fn set(&mut self, ch: usize, row: usize, col: usize, v: f64) {
        let i = self.index(ch, row, col);
        self.data[i] = v;
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.spec.cells();
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [f64] {
        let n = self.spec.cells();
        &mut self.data[ch * n..(ch + 1) * n]
    }

    pub fn push_constant_channel(&mut self, value: f64) {
        self.data.extend(std::iter::repeat_n(value, self.spec.cells()));
        self.channels += 1;
    }

    /// Keeps only the listed channels, in order.
    pub fn select_channels(&self, chans: &[usize]) -> BevGrid {
        let mut data = Vec::with_capacity(chans.len() * self.spec.cells());
        for &c in chans {
            data.extend_from_slice(self.channel(c));
        }
        BevGrid {
            spec: self.spec,
            channels: chans.len(),
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &BevGrid) -> bool {
        self.spec == other.spec && self.channels == other.channels
    }

    /// Bilinear sample of channel `ch` at continuous `(col, row)`; zero outside.
    #[inline]
    pub fn sample(&self, ch: usize, u: f64, v: f64) -> f64 {
        let plane = self.channel(ch);
        sample_plane(plane, self.spec.width, self.spec.height, u, v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(BEV_GRID_MAGIC);
        for dim in [self.spec.height, self.spec.width, self.channels] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in [self.spec.resolution, self.spec.origin[0], self.spec.origin[1]] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    /// Serialized length in bytes without materializing the blob.
    pub fn byte_len(&self) -> usize {
        BEV_HEADER_LEN + 4 * self.data.len()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<BevGrid, FusionError> {
        if buf.len() < BEV_HEADER_LEN || &buf[..8] != BEV_GRID_MAGIC {
            return Err(FusionError::Format("missing CPALBG01 header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let (h, w, c) = (u32_at(8), u32_at(12), u32_at(16));
        let spec = GridSpec {
            width: w,
            height: h,
            resolution: f64_at(20),
            origin: [f64_at(28), f64_at(36)],
        };
        spec.validate()?;
        let n = h * w * c;
        let body = &buf[BEV_HEADER_LEN..];
        if body.len() != 4 * n {
            return Err(FusionError::Format(format!("expected {} payload bytes, found {}", 4 * n, body.len())));
        }
        let data = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        BevGrid::from_data(spec, c, data)
    }
}

#[inline]
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

#[inline]
pub(crate) fn sample_plane(plane: &[f64], width: usize, height: usize, u: f64, v: f64) -> f64 {
    let u = snap(u);
    let v = snap(v);
    let c0 = u.floor();
    let r0 = v.floor();
    let fu = u - c0;
    let fv = v - r0;
    if !(c0 > -2.0 && r0 > -2.0 && c0 < width as f64 && r0 < height as f64) {
        return 0.0;
    }
    let (c0, r0) = (c0 as isize, r0 as isize);
    let mut acc = 0.0;
    for (dr, wr) in [(0isize, 1.0 - fv), (1, fv)] {
        if wr == 0.0 {
            continue;
        }
        let r = r0 + dr;
        if r < 0 || r >= height as isize {
            continue;
        }
        for (dc, wc) in [(0isize, 1.0 - fu), (1, fu)] {
            if wc == 0.0 {
                continue;
            }
            let c = c0 + dc;
            if c < 0 || c >= width as isize {
                continue;
            }
            acc += wr * wc * plane[r as usize * width + c as usize];
        }
    }
    acc
}

/// Three channels per cell: occupancy (0/1), `ln(1 + count)`, max point height.
/// Points falling outside the grid are dropped.
pub fn rasterize_bev(cloud: &PointCloud, spec: &GridSpec) -> BevGrid {
    let mut grid = BevGrid::zeros(*spec, 3);
    let mut counts = vec![0u32; spec.cells()];
    let mut height = vec![f64::NEG_INFINITY; spec.cells()];
    for p in cloud.iter() {
        if let Some((r, c)) = spec.cell_of(p.x, p.y) {
            let k = r * spec.width + c;
            counts[k] += 1;
            height[k] = height[k].max(p.z);
        }
    }
    let n = spec.cells();
    for k in 0..n {
        if counts[k] > 0 {
            grid.data[k] = 1.0;
            grid.data[n + k] = (1.0 + counts[k] as f64).ln();
            grid.data[2 * n + k] = height[k];
        }
    }
    grid
}

/// Inverse warp: the output cell at position `p` takes the bilinear sample of
/// `g` at `delta^-1(p)`. Samples outside `g` are zero.
pub fn warp_grid(g: &BevGrid, delta: &Pose2D) -> BevGrid {
    if delta.is_identity() {
        return g.clone();
    }
    let spec = g.spec;
    let inv = delta.inverse();
    let (s, c) = inv.theta.sin_cos();
    let mut out = BevGrid::zeros(spec, g.channels);
    let n = spec.cells();
    // Sample coordinates once, reuse for every channel.
    let coords: Vec<(f64, f64)> = (0..spec.height)
        .flat_map(|r| (0..spec.width).map(move |col| (r, col)))
        .map(|(r, col)| {
            let (x, y) = spec.cell_center(r, col);
            let qx = c * x - s * y + inv.x;
            let qy = s * x + c * y + inv.y;
            spec.to_index(qx, qy)
        })
        .collect();
    for ch in 0..g.channels {
        let plane = g.channel(ch);
        let dst = &mut out.data[ch * n..(ch + 1) * n];
        for (k, &(u, v)) in coords.iter().enumerate() {
            dst[k] = sample_plane(plane, spec.width, spec.height, u, v);
        }
    }
    out
}
