//! BEV feature extraction, coarse pose-driven alignment, confidence
//! embedding and residual 3-DoF feature spatial alignment (FSA).

mod align;
mod fsa_net;
mod grid;

pub use align::{
    apply_offset, coarse_align, confidence_embed, fsa_oracle_estimate, fsa_oracle_score, normalized_confidences, FsaSearch,
    OffsetDelta,
};
pub use fsa_net::{fsa_backward, fsa_forward, fsa_loss, Conv2d, Dense, FsaArchitecture, FsaParams};
pub use grid::{rasterize_bev, warp_grid, BevGrid, GridSpec, BEV_GRID_MAGIC, BEV_HEADER_LEN};

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("list lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("confidences must be finite, non-negative and not all zero")]
    InvalidConfidence,
    #[error("occupancy has zero variance; nothing to correlate")]
    NoSignal,
    #[error("malformed grid blob: {0}")]
    Format(String),
}
