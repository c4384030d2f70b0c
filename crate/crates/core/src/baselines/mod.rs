//! Reference aligners: point-to-point ICP and greedy graph matching over
//! shared bounding boxes.

mod graph;
mod icp;

pub use graph::{graph_match_align, GraphMatch, GraphMatchConfig};
pub use icp::{icp_align, icp_align_from, IcpConfig, IcpResult};

use crate::detection::RotatedBox3D;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BaselineError {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("no correspondences within {0} m")]
    NoCorrespondences(f64),
    #[error("no consensus: {matched} consistent matches, {required} required")]
    NoConsensus { matched: usize, required: usize },
    #[error("degenerate geometry for a rigid solve")]
    Degenerate,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Boxes seen by one agent, in that agent's frame. This is the message a
/// box-sharing aligner transmits; it serializes as a plain list of 7-float boxes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoxObservation {
    pub boxes: Vec<RotatedBox3D>,
}

impl BoxObservation {
    pub fn new(boxes: Vec<RotatedBox3D>) -> Self {
        Self { boxes }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.boxes.iter().all(|b| b.to_array().iter().all(|v| v.is_finite()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("boxes serialize")
    }

    pub fn byte_len(&self) -> usize {
        self.to_json().len()
    }
}
