//! Small CNN + MLP that regresses the 3-DoF offset between an ego grid and a
//! coarsely aligned neighbor grid, with an exact hand-written backward pass.
//!
//! Layout: the two grids are stacked along channels, passed through strided
//! `tanh` convolutions, global-average pooled, then through `tanh` dense
//! layers and a final linear layer with exactly three outputs `(dx, dy, dtheta)`.

use super::{BevGrid, FusionError, OffsetDelta};
use crate::geometry::seeded_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsaArchitecture {
    /// Channels of ego + neighbor together.
    pub in_channels: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub hidden: Vec<usize>,
}

impl FsaArchitecture {
    /// Two stride-2 3x3 convolutions (8, 16 channels) and one hidden layer of 32.
    pub fn standard(in_channels: usize) -> Self {
        Self {
            in_channels,
            conv_channels: vec![8, 16],
            kernel: 3,
            stride: 2,
            hidden: vec![32],
        }
    }
}

/// Weights are `[out][in][k][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    fn zeros(out_ch: usize, in_ch: usize, kernel: usize, stride: usize) -> Self {
        Self {
            out_ch,
            in_ch,
            kernel,
            stride,
            weight: vec![0.0; out_ch * in_ch * kernel * kernel],
            bias: vec![0.0; out_ch],
        }
    }

    fn pad(&self) -> usize {
        self.kernel / 2
    }

    fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let p = 2 * self.pad();
        ((h + p - self.kernel) / self.stride + 1, (w + p - self.kernel) / self.stride + 1)
    }

    #[inline]
    fn w_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_ch + i) * self.kernel + ky) * self.kernel + kx
    }

    /// Pre-activation output `[out][oh][ow]`.
    fn forward(&self, x: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
        let (oh, ow) = self.out_size(h, w);
        let pad = self.pad() as isize;
        let mut out = vec![0.0; self.out_ch * oh * ow];
        for o in 0..self.out_ch {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = self.bias[o];
                    for i in 0..self.in_ch {
                        for ky in 0..self.kernel {
                            let sy = (y * self.stride + ky) as isize - pad;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.kernel {
                                let sx = (xo * self.stride + kx) as isize - pad;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                acc += self.weight[self.w_index(o, i, ky, kx)]
                                    * x[(i * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    out[(o * oh + y) * ow + xo] = acc;
                }
            }
        }
        (out, oh, ow)
    }

    /// Accumulates weight/bias gradients into `grad` and returns the input gradient.
    fn backward(&self, x: &[f64], h: usize, w: usize, dpre: &[f64], grad: &mut Conv2d) -> Vec<f64> {
        let (oh, ow) = self.out_size(h, w);
        let pad = self.pad() as isize;
        let mut dx = vec![0.0; x.len()];
        for o in 0..self.out_ch {
            for y in 0..oh {
                for xo in 0..ow {
                    let g = dpre[(o * oh + y) * ow + xo];
                    if g == 0.0 {
                        continue;
                    }
                    grad.bias[o] += g;
                    for i in 0..self.in_ch {
                        for ky in 0..self.kernel {
                            let sy = (y * self.stride + ky) as isize - pad;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.kernel {
                                let sx = (xo * self.stride + kx) as isize - pad;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                let xi = (i * h + sy as usize) * w + sx as usize;
                                let wi = self.w_index(o, i, ky, kx);
                                grad.weight[wi] += g * x[xi];
                                dx[xi] += g * self.weight[wi];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Weights are `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            out_dim,
            in_dim,
            weight: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|o| {
                let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                self.bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    fn backward(&self, x: &[f64], dout: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            grad.bias[o] += dout[o];
            for i in 0..self.in_dim {
                grad.weight[o * self.in_dim + i] += dout[o] * x[i];
                dx[i] += dout[o] * self.weight[o * self.in_dim + i];
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsaParams {
    pub arch: FsaArchitecture,
    pub convs: Vec<Conv2d>,
    pub dense: Vec<Dense>,
}

impl FsaParams {
    pub fn zeros(arch: &FsaArchitecture) -> Self {
        let mut convs = Vec::new();
        let mut c_in = arch.in_channels;
        for &c in &arch.conv_channels {
            convs.push(Conv2d::zeros(c, c_in, arch.kernel, arch.stride));
            c_in = c;
        }
        let mut dense = Vec::new();
        let mut d_in = c_in;
        for &d in arch.hidden.iter().chain(std::iter::once(&3)) {
            dense.push(Dense::zeros(d, d_in));
            d_in = d;
        }
        Self {
            arch: arch.clone(),
            convs,
            dense,
        }
    }

    /// Uniform fan-in scaled initialization, zero biases.
    pub fn init(arch: &FsaArchitecture, seed: u64) -> Self {
        let mut p = Self::zeros(arch);
        let mut rng = seeded_rng(seed);
        for c in &mut p.convs {
            let bound = (3.0 / (c.in_ch * c.kernel * c.kernel) as f64).sqrt();
            c.weight.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        }
        for d in &mut p.dense {
            let bound = (3.0 / d.in_dim as f64).sqrt();
            d.weight.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        }
        p
    }

    /// Every parameter tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for c in &self.convs {
            v.push(&c.weight);
            v.push(&c.bias);
        }
        for d in &self.dense {
            v.push(&d.weight);
            v.push(&d.bias);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = Vec::new();
        for c in &mut self.convs {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        for d in &mut self.dense {
            v.push(&mut d.weight);
            v.push(&mut d.bias);
        }
        v
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &FsaParams, lr: f64) {
        for (p, g) in self.tensors_mut().into_iter().zip(grad.tensors()) {
            p.iter_mut().zip(g).for_each(|(a, b)| *a -= lr * b);
        }
    }
}

struct Trace {
    /// Input to each conv (index 0 is the stacked grids), then the last conv activation.
    conv_inputs: Vec<(Vec<f64>, usize, usize)>,
    pooled: Vec<f64>,
    /// Input to each dense layer.
    dense_inputs: Vec<Vec<f64>>,
    output: [f64; 3],
}

fn stack(params: &FsaParams, ego: &BevGrid, nbr: &BevGrid) -> Result<Vec<f64>, FusionError> {
    if ego.spec != nbr.spec {
        return Err(FusionError::ShapeMismatch("ego and neighbor grids differ in spec".into()));
    }
    if ego.channels + nbr.channels != params.arch.in_channels {
        return Err(FusionError::ShapeMismatch(format!(
            "network expects {} input channels, grids provide {}",
            params.arch.in_channels,
            ego.channels + nbr.channels
        )));
    }
    let mut x = ego.data.clone();
    x.extend_from_slice(&nbr.data);
    Ok(x)
}

fn run(params: &FsaParams, ego: &BevGrid, nbr: &BevGrid) -> Result<Trace, FusionError> {
    let mut x = stack(params, ego, nbr)?;
    let (mut h, mut w) = (ego.spec.height, ego.spec.width);
    let mut conv_inputs = Vec::with_capacity(params.convs.len() + 1);
    for conv in &params.convs {
        let (mut pre, oh, ow) = conv.forward(&x, h, w);
        pre.iter_mut().for_each(|v| *v = v.tanh());
        conv_inputs.push((std::mem::replace(&mut x, pre), h, w));
        h = oh;
        w = ow;
    }
    let channels = params.convs.last().map_or(params.arch.in_channels, |c| c.out_ch);
    let area = (h * w) as f64;
    let pooled: Vec<f64> = (0..channels)
        .map(|c| x[c * h * w..(c + 1) * h * w].iter().sum::<f64>() / area)
        .collect();
    conv_inputs.push((x, h, w));

    let mut dense_inputs = Vec::with_capacity(params.dense.len());
    let mut a = pooled.clone();
    let last = params.dense.len() - 1;
    for (k, layer) in params.dense.iter().enumerate() {
        let mut z = layer.forward(&a);
        if k != last {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        dense_inputs.push(std::mem::replace(&mut a, z));
    }
    Ok(Trace {
        conv_inputs,
        pooled,
        dense_inputs,
        output: [a[0], a[1], a[2]],
    })
}

/// Raw network outputs `(dx, dy, dtheta)` without angle wrapping.
pub fn fsa_forward_raw(params: &FsaParams, ego: &BevGrid, nbr: &BevGrid) -> Result<[f64; 3], FusionError> {
    Ok(run(params, ego, nbr)?.output)
}

pub fn fsa_forward(params: &FsaParams, ego: &BevGrid, nbr: &BevGrid) -> Result<OffsetDelta, FusionError> {
    let o = fsa_forward_raw(params, ego, nbr)?;
    Ok(OffsetDelta::new(o[0], o[1], o[2]))
}

/// `0.5 * |output - target|^2`, with the raw (unwrapped) network output.
pub fn fsa_loss(params: &FsaParams, ego: &BevGrid, nbr: &BevGrid, target: &OffsetDelta) -> Result<f64, FusionError> {
    let o = fsa_forward_raw(params, ego, nbr)?;
    let t = [target.dx, target.dy, target.dtheta];
    Ok(0.5 * (0..3).map(|k| (o[k] - t[k]).powi(2)).sum::<f64>())
}

/// Gradient of [`fsa_loss`] with respect to every parameter.
pub fn fsa_backward(
    params: &FsaParams,
    ego: &BevGrid,
    nbr: &BevGrid,
    target: &OffsetDelta,
) -> Result<FsaParams, FusionError> {
    let trace = run(params, ego, nbr)?;
    let mut grad = FsaParams::zeros(&params.arch);
    let t = [target.dx, target.dy, target.dtheta];
    let mut d: Vec<f64> = (0..3).map(|k| trace.output[k] - t[k]).collect();

    let last = params.dense.len() - 1;
    for k in (0..params.dense.len()).rev() {
        if k != last {
            // d is w.r.t. this layer's tanh output, which is the next layer's input.
            let act = &trace.dense_inputs[k + 1];
            d.iter_mut().zip(act).for_each(|(g, a)| *g *= 1.0 - a * a);
        }
        d = params.dense[k].backward(&trace.dense_inputs[k], &d, &mut grad.dense[k]);
    }
    debug_assert_eq!(d.len(), trace.pooled.len());

    let (ref act, h, w) = *trace.conv_inputs.last().expect("trace holds the final activation");
    let area = (h * w) as f64;
    let mut dact: Vec<f64> = Vec::with_capacity(act.len());
    for g in &d {
        dact.extend(std::iter::repeat_n(g / area, h * w));
    }
    for k in (0..params.convs.len()).rev() {
        let act = &trace.conv_inputs[k + 1].0;
        let dpre: Vec<f64> = dact.iter().zip(act).map(|(g, a)| g * (1.0 - a * a)).collect();
        let (ref x, ih, iw) = trace.conv_inputs[k];
        dact = params.convs[k].backward(x, ih, iw, &dpre, &mut grad.convs[k]);
    }
    Ok(grad)
}
