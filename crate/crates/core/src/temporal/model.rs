use super::layer::{backward_cached, run_layer, LayerParams};
use super::{temporal_encoding_with, tokenize, EncodingVariant, TemporalError, TokenSequence};
use crate::fusion::BevGrid;
use crate::geometry::seeded_rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViTConfig {
    pub in_channels: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub mlp_hidden: usize,
    pub encoding: EncodingVariant,
    /// Adds a fixed 2D sinusoidal code per cell before the layers.
    pub spatial_encoding: bool,
}

impl Default for ViTConfig {
    fn default() -> Self {
        Self {
            in_channels: 4,
            d_model: 16,
            heads: 2,
            layers: 2,
            mlp_hidden: 32,
            encoding: EncodingVariant::AsPrinted,
            spatial_encoding: false,
        }
    }
}

impl ViTConfig {
    pub fn validate(&self) -> Result<(), TemporalError> {
        if self.d_model == 0 || !self.d_model.is_multiple_of(2) {
            return Err(TemporalError::OddDimension(self.d_model));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(TemporalError::HeadMismatch {
                d: self.d_model,
                heads: self.heads,
            });
        }
        if self.in_channels == 0 || self.mlp_hidden == 0 {
            return Err(TemporalError::ShapeMismatch("input channels and MLP width must be positive".into()));
        }
        if self.spatial_encoding && !self.d_model.is_multiple_of(4) {
            return Err(TemporalError::ShapeMismatch("spatial encoding needs d_model divisible by 4".into()));
        }
        Ok(())
    }
}

/// Embedding (`[in_channels][d_model]`) plus the layer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ViTParams {
    pub config: ViTConfig,
    pub seed: u64,
    pub embed_w: DMatrix<f64>,
    pub embed_b: DVector<f64>,
    pub layers: Vec<LayerParams>,
}

impl ViTParams {
    /// Zero embedding and identity layers.
    pub fn zeros(config: &ViTConfig) -> Result<Self, TemporalError> {
        config.validate()?;
        let d = config.d_model;
        Ok(Self {
            config: config.clone(),
            seed: 0,
            embed_w: DMatrix::zeros(config.in_channels, d),
            embed_b: DVector::zeros(d),
            layers: (0..config.layers)
                .map(|_| LayerParams::zeros(d, config.heads, config.mlp_hidden))
                .collect(),
        })
    }

    /// Random weights scaled by `gain`; a small gain keeps the encoder close to identity.
    pub fn init(config: &ViTConfig, seed: u64, gain: f64) -> Result<Self, TemporalError> {
        let mut p = Self::zeros(config)?;
        p.seed = seed;
        let mut rng = seeded_rng(seed);
        let bound = (3.0 / config.in_channels as f64).sqrt();
        p.embed_w.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        for layer in &mut p.layers {
            *layer = LayerParams::random(config.d_model, config.heads, config.mlp_hidden, gain, &mut rng);
        }
        Ok(p)
    }

    pub fn num_params(&self) -> usize {
        self.embed_w.len() + self.embed_b.len()
            + self
                .layers
                .iter()
                .map(|l| l.tensors().iter().map(|t| t.2.len()).sum::<usize>())
                .sum::<usize>()
    }

    fn zeros_like(&self) -> Self {
        let mut g = Self::zeros(&self.config).expect("validated config");
        g.seed = self.seed;
        for l in &mut g.layers {
            l.ln1_gamma.fill(0.0);
            l.ln2_gamma.fill(0.0);
        }
        g
    }
}

fn check_frames(params: &ViTParams, frames: &[BevGrid]) -> Result<(), TemporalError> {
    params.config.validate()?;
    let first = frames.first().ok_or(TemporalError::NoFrames)?;
    if frames.iter().any(|f| f.spec != first.spec) {
        return Err(TemporalError::ShapeMismatch("frames differ in grid spec".into()));
    }
    if let Some(f) = frames.iter().find(|f| f.channels != params.config.in_channels) {
        return Err(TemporalError::ShapeMismatch(format!(
            "frame has {} channels, encoder expects {}",
            f.channels, params.config.in_channels
        )));
    }
    Ok(())
}

/// Cell-major `[cells][channels]` view of a grid.
fn cell_matrix(grid: &BevGrid) -> DMatrix<f64> {
    let n = grid.spec.cells();
    DMatrix::from_fn(n, grid.channels, |k, c| grid.data[c * n + k])
}

fn grid_from_cells(spec: crate::fusion::GridSpec, m: &DMatrix<f64>) -> BevGrid {
    let n = m.nrows();
    let mut data = vec![0.0; n * m.ncols()];
    for c in 0..m.ncols() {
        for k in 0..n {
            data[c * n + k] = m[(k, c)];
        }
    }
    BevGrid::from_data(spec, m.ncols(), data).expect("sizes agree")
}

/// Per-cell linear projection from the input channels to `d_model`.
pub fn embed_grid(params: &ViTParams, grid: &BevGrid) -> Result<BevGrid, TemporalError> {
    check_frames(params, std::slice::from_ref(grid))?;
    let mut e = cell_matrix(grid) * &params.embed_w;
    for mut row in e.row_iter_mut() {
        row += params.embed_b.transpose();
    }
    Ok(grid_from_cells(grid.spec, &e))
}

fn spatial_code(spec: &crate::fusion::GridSpec, d: usize) -> DMatrix<f64> {
    let half = d / 2;
    DMatrix::from_fn(spec.cells(), d, |k, j| {
        let (row, col) = (k / spec.width, k % spec.width);
        let (pos, j) = if j < half { (row as f64, j) } else { (col as f64, j - half) };
        let freq = 10000f64.powf((2 * (j / 2)) as f64 / half as f64);
        if j % 2 == 0 {
            (pos / freq).sin()
        } else {
            (pos / freq).cos()
        }
    })
}

fn initial_tokens(params: &ViTParams, frames: &[BevGrid]) -> Result<TokenSequence, TemporalError> {
    let embedded: Vec<BevGrid> = frames.iter().map(|f| embed_grid(params, f)).collect::<Result<_, _>>()?;
    let mut seq = tokenize(&embedded, params.config.encoding)?;
    if params.config.spatial_encoding {
        let code = spatial_code(&frames[0].spec, params.config.d_model);
        let n = seq.tokens_per_frame;
        for t in 0..seq.frames {
            let mut rows = seq.tokens.rows_mut(t * n, n);
            rows += &code;
        }
    }
    Ok(seq)
}

/// Runs every layer over the sequence.
pub fn vit_forward(params: &ViTParams, z: &TokenSequence) -> Result<TokenSequence, TemporalError> {
    params.config.validate()?;
    if z.dim() != params.config.d_model {
        return Err(TemporalError::ShapeMismatch(format!(
            "tokens have width {}, encoder expects {}",
            z.dim(),
            params.config.d_model
        )));
    }
    let mut x = z.tokens.clone();
    for layer in &params.layers {
        layer.validate()?;
        x = run_layer(layer, &x, false).0;
    }
    TokenSequence::new(z.frames, z.tokens_per_frame, x)
}

/// Layer gradients (one per layer) and the gradient with respect to `z`.
pub fn vit_backward(
    params: &ViTParams,
    z: &TokenSequence,
    upstream: &DMatrix<f64>,
) -> Result<(Vec<LayerParams>, DMatrix<f64>), TemporalError> {
    vit_forward(params, z)?;
    if upstream.shape() != z.tokens.shape() {
        return Err(TemporalError::ShapeMismatch("upstream gradient shape differs from tokens".into()));
    }
    let mut caches = Vec::with_capacity(params.layers.len());
    let mut x = z.tokens.clone();
    for layer in &params.layers {
        let (out, cache) = run_layer(layer, &x, true);
        caches.push(cache.expect("cache requested"));
        x = out;
    }
    let mut grad = upstream.clone();
    let mut layer_grads = vec![None; params.layers.len()];
    for (k, layer) in params.layers.iter().enumerate().rev() {
        let (g, dz) = backward_cached(layer, &caches[k], &grad);
        layer_grads[k] = Some(g);
        grad = dz;
    }
    Ok((layer_grads.into_iter().map(|g| g.expect("filled")).collect(), grad))
}

/// Embeds, tokenizes and encodes `frames` (oldest first) and returns the last
/// frame's tokens as a `d_model`-channel grid.
pub fn encode(params: &ViTParams, frames: &[BevGrid]) -> Result<BevGrid, TemporalError> {
    check_frames(params, frames)?;
    let seq = vit_forward(params, &initial_tokens(params, frames)?)?;
    Ok(grid_from_cells(frames[0].spec, &seq.frame(seq.frames - 1)))
}

/// Gradient of `<upstream, encode(params, frames)>` with respect to every parameter.
pub fn encode_backward(params: &ViTParams, frames: &[BevGrid], upstream: &BevGrid) -> Result<ViTParams, TemporalError> {
    check_frames(params, frames)?;
    let seq = initial_tokens(params, frames)?;
    if upstream.spec != frames[0].spec || upstream.channels != params.config.d_model {
        return Err(TemporalError::ShapeMismatch("upstream grid does not match the encoder output".into()));
    }
    let n = seq.tokens_per_frame;
    let mut up = DMatrix::zeros(seq.len(), seq.dim());
    up.rows_mut((seq.frames - 1) * n, n).copy_from(&cell_matrix(upstream));
    let (layer_grads, dz) = vit_backward(params, &seq, &up)?;
    let mut g = params.zeros_like();
    g.layers = layer_grads;
    for (t, frame) in frames.iter().enumerate() {
        let dzt = dz.rows(t * n, n);
        g.embed_w += cell_matrix(frame).transpose() * dzt;
        for row in dzt.row_iter() {
            g.embed_b += row.transpose();
        }
    }
    Ok(g)
}

/// Temporal code of the most recent of `frames` frames, for callers that need to undo it.
pub fn last_frame_encoding(params: &ViTParams, frames: usize) -> Vec<f64> {
    temporal_encoding_with(frames as f64, params.config.d_model, params.config.encoding).expect("validated config")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::GridSpec;

    fn frames(seed: u64, t: usize, c: usize) -> Vec<BevGrid> {
        let spec = GridSpec::centered(4, 3, 1.0);
        let mut rng = seeded_rng(seed);
        (0..t)
            .map(|_| BevGrid::from_data(spec, c, (0..spec.cells() * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect()
    }

    fn small_config() -> ViTConfig {
        ViTConfig {
            in_channels: 3,
            d_model: 8,
            heads: 2,
            layers: 2,
            mlp_hidden: 12,
            ..ViTConfig::default()
        }
    }

    #[test]
    fn no_layers_gives_embedding_plus_code() {
        let cfg = ViTConfig { layers: 0, ..small_config() };
        let p = ViTParams::init(&cfg, 1, 1.0).unwrap();
        let f = frames(2, 1, 3);
        let out = encode(&p, &f).unwrap();
        let emb = embed_grid(&p, &f[0]).unwrap();
        let e1 = last_frame_encoding(&p, 1);
        let n = f[0].spec.cells();
        for c in 0..8 {
            for k in 0..n {
                assert_eq!(out.data[c * n + k], emb.data[c * n + k] + e1[c]);
            }
        }
    }

    #[test]
    fn output_shape_and_determinism() {
        let p = ViTParams::init(&small_config(), 3, 1.0).unwrap();
        let f = frames(4, 3, 3);
        let a = encode(&p, &f).unwrap();
        assert_eq!((a.channels, a.spec), (8, f[0].spec));
        assert_eq!(a.data, encode(&p, &f).unwrap().data);
        assert!(encode(&p, &frames(4, 2, 2)).is_err());
        assert!(encode(&p, &[]).is_err());
    }

    #[test]
    fn cell_permutation_is_equivariant() {
        let p = ViTParams::init(&small_config(), 5, 1.0).unwrap();
        let f = frames(6, 2, 3);
        let n = f[0].spec.cells();
        let perm: Vec<usize> = (0..n).map(|k| (k * 5 + 3) % n).collect();
        let permute = |g: &BevGrid| {
            let mut out = g.clone();
            for c in 0..g.channels {
                for k in 0..n {
                    out.data[c * n + k] = g.data[c * n + perm[k]];
                }
            }
            out
        };
        let base = encode(&p, &f).unwrap();
        let moved = encode(&p, &f.iter().map(permute).collect::<Vec<_>>()).unwrap();
        for c in 0..8 {
            for k in 0..n {
                let (a, b) = (moved.data[c * n + k], base.data[c * n + perm[k]]);
                // Attention sums run in token order, so only rounding may differ.
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn spatial_code_breaks_equivariance() {
        let cfg = ViTConfig { spatial_encoding: true, ..small_config() };
        let p = ViTParams::init(&cfg, 5, 1.0).unwrap();
        let f = frames(6, 1, 3);
        let mut swapped = f[0].clone();
        let n = f[0].spec.cells();
        for c in 0..3 {
            swapped.data.swap(c * n, c * n + 1);
        }
        let a = encode(&p, &f).unwrap();
        let b = encode(&p, &[swapped]).unwrap();
        assert!((0..8).any(|c| a.data[c * n] != b.data[c * n + 1]));
        assert!(ViTConfig { d_model: 6, heads: 2, spatial_encoding: true, ..small_config() }.validate().is_err());
    }

    #[test]
    fn zero_layers_are_identity_in_the_stack() {
        let p = ViTParams::zeros(&small_config()).unwrap();
        let f = frames(7, 2, 3);
        let seq = initial_tokens(&p, &f).unwrap();
        assert_eq!(vit_forward(&p, &seq).unwrap(), seq);
    }

    #[test]
    #[allow(clippy::type_complexity)]
    fn full_model_gradient_check() {
        let p = ViTParams::init(&small_config(), 8, 1.0).unwrap();
        let f = frames(9, 2, 3);
        let mut rng = seeded_rng(10);
        let up = BevGrid::from_data(f[0].spec, 8, (0..f[0].spec.cells() * 8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let loss = |p: &ViTParams| -> f64 {
            encode(p, &f).unwrap().data.iter().zip(&up.data).map(|(a, b)| a * b).sum()
        };
        let g = encode_backward(&p, &f, &up).unwrap();
        let h = 1e-5;
        let mut checked = 0;
        while checked < 120 {
            let mut plus = p.clone();
            let mut minus = p.clone();
            let group = rng.random_range(0..1 + 16 * p.layers.len());
            let (an, apply): (f64, Box<dyn Fn(&mut ViTParams, f64)>) = if group == 0 {
                let i = rng.random_range(0..p.embed_w.len());
                (g.embed_w.as_slice()[i], Box::new(move |q: &mut ViTParams, d| q.embed_w.as_mut_slice()[i] += d))
            } else {
                let (l, t) = ((group - 1) / 16, (group - 1) % 16);
                let i = rng.random_range(0..p.layers[l].tensors()[t].2.len());
                (g.layers[l].tensors()[t].2[i], Box::new(move |q: &mut ViTParams, d| q.layers[l].tensors_mut()[t][i] += d))
            };
            apply(&mut plus, h);
            apply(&mut minus, -h);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            assert!(rel < 1e-4 || (fd - an).abs() < 1e-9, "group {group}: fd {fd} analytic {an}");
            checked += 1;
        }
        // Embedding bias too.
        for i in 0..8 {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.embed_b[i] += h;
            minus.embed_b[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - g.embed_b[i]).abs() / fd.abs().max(1e-8) < 1e-4);
        }
    }
}
