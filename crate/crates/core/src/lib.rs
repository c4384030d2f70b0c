//! GNSS-free multi-agent pose alignment and cooperative BEV feature fusion.

// NaN-rejecting `!(x > 0.0)` checks and index loops over parallel buffers are intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod geometry;
pub mod harness;
pub mod baselines;
pub mod detection;
pub mod fusion;
pub mod pgc;
pub mod temporal;

pub use geometry::{Pose, Pose2D, PointCloud};
