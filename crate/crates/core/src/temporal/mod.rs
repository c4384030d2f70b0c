//! Temporal transformer encoder over per-cell BEV tokens.
//!
//! Each frame's grid is embedded to `D` channels, flattened to one token per
//! cell, offset by a sinusoidal temporal encoding `E_t` (frames are numbered
//! `1..=T`), and the whole `T * H * W` sequence runs through pre-norm
//! transformer layers. The most recent frame's tokens are reshaped back into
//! a grid.

mod checkpoint;
mod layer;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use layer::{
    attention_weights, gelu, gelu_grad, layer_backward, layer_forward, softmax_backward, LayerParams, LAYER_TENSOR_NAMES,
};
pub use model::{embed_grid, encode, encode_backward, last_frame_encoding, vit_backward, vit_forward, ViTConfig, ViTParams};

use crate::fusion::BevGrid;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TemporalError {
    #[error("embedding dimension must be even, got {0}")]
    OddDimension(usize),
    #[error("dimension {d} is not divisible by {heads} heads")]
    HeadMismatch { d: usize, heads: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no frames given")]
    NoFrames,
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint I/O at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which exponent pairing the cosine terms use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingVariant {
    /// `sin(t / 10000^(2k/D))`, `cos(t / 10000^((2k+1)/D))`.
    #[default]
    AsPrinted,
    /// Both terms of pair `k` share the frequency `10000^(2k/D)`.
    Classic,
}

pub fn temporal_encoding(t: f64, d: usize) -> Result<Vec<f64>, TemporalError> {
    temporal_encoding_with(t, d, EncodingVariant::AsPrinted)
}

pub fn temporal_encoding_with(t: f64, d: usize, variant: EncodingVariant) -> Result<Vec<f64>, TemporalError> {
    if !d.is_multiple_of(2) || d == 0 {
        return Err(TemporalError::OddDimension(d));
    }
    let df = d as f64;
    let mut e = vec![0.0; d];
    for k in 0..d / 2 {
        let even = (2 * k) as f64;
        let odd = match variant {
            EncodingVariant::AsPrinted => even + 1.0,
            EncodingVariant::Classic => even,
        };
        e[2 * k] = (t / 10000f64.powf(even / df)).sin();
        e[2 * k + 1] = (t / 10000f64.powf(odd / df)).cos();
    }
    Ok(e)
}

/// `T * N` tokens of width `D`; row `t * N + n` is cell `n` of frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub frames: usize,
    pub tokens_per_frame: usize,
    pub tokens: DMatrix<f64>,
}

impl TokenSequence {
    pub fn new(frames: usize, tokens_per_frame: usize, tokens: DMatrix<f64>) -> Result<Self, TemporalError> {
        if tokens.nrows() != frames * tokens_per_frame {
            return Err(TemporalError::ShapeMismatch(format!(
                "{} rows for {frames} frames of {tokens_per_frame} tokens",
                tokens.nrows()
            )));
        }
        Ok(Self {
            frames,
            tokens_per_frame,
            tokens,
        })
    }

    pub fn dim(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tokens.iter().all(|v| v.is_finite())
    }

    /// Tokens of frame `t` (0-based).
    pub fn frame(&self, t: usize) -> DMatrix<f64> {
        self.tokens.rows(t * self.tokens_per_frame, self.tokens_per_frame).into_owned()
    }
}

/// Flattens `D`-channel grids into tokens and adds `E_1 .. E_T`.
pub fn tokenize(frames: &[BevGrid], variant: EncodingVariant) -> Result<TokenSequence, TemporalError> {
    let first = frames.first().ok_or(TemporalError::NoFrames)?;
    let d = first.channels;
    if d % 2 != 0 || d == 0 {
        return Err(TemporalError::OddDimension(d));
    }
    let n = first.spec.cells();
    if frames.iter().any(|f| f.spec != first.spec || f.channels != d) {
        return Err(TemporalError::ShapeMismatch("frames differ in grid shape".into()));
    }
    let mut tokens = DMatrix::zeros(frames.len() * n, d);
    for (t, frame) in frames.iter().enumerate() {
        let e = temporal_encoding_with((t + 1) as f64, d, variant)?;
        for c in 0..d {
            let plane = frame.channel(c);
            for k in 0..n {
                tokens[(t * n + k, c)] = plane[k] + e[c];
            }
        }
    }
    TokenSequence::new(frames.len(), n, tokens)
}
