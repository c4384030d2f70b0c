//! Pose generation with confidence.
//!
//! Each agent turns its local LiDAR cloud into a set of scene-coordinate
//! correspondences (local point -> predicted world point, with a predicted
//! per-point error), fits its global pose with RANSAC over Kabsch solves, and
//! turns the mean predicted error of the consensus set into a confidence
//! `1 / (1 + eps^2)`.
//!
//! The learned regressor is replaced by [`oracle_predict`], which corrupts the
//! ground-truth scene coordinates with a configurable structured error model.

mod loss;
mod oracle;
mod ransac;
mod solve;

pub use loss::{
    confidence_from_error, coordinate_error, coordinate_error_with, regression_loss,
    regression_loss_with, ErrorNorm,
};
pub use oracle::{oracle_predict, rsd_downsample, OracleErrorModel, SceneCoordPrediction};
pub use ransac::{ransac_pose, PoseEstimate, PoseMessage, RansacConfig};
pub use solve::kabsch_solve;
pub(crate) use solve::kabsch_points;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PgcError {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("voxel size must be positive and finite, got {0}")]
    InvalidVoxel(f64),
    #[error("ground-truth scene coordinates are required")]
    MissingGroundTruth,
    #[error("error magnitude must be a non-negative number, got {0}")]
    NegativeError(f64),
    #[error("correspondence lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate sample: need at least 3 non-collinear points")]
    DegenerateSample,
    #[error("need at least {required} correspondences, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error("alignment failure: best consensus {best} below minimum {required}")]
    InsufficientConsensus { best: usize, required: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
