//! Synthetic scenes, message accounting, the end-to-end pipeline and the
//! benchmark protocols built on top of it.

mod align;
mod config;
mod ledger;
mod pipeline;
mod report;
mod scenario;
mod selftest;
mod sweep;

pub use align::{run_alignment_benchmark, AlignmentReport, AlignmentRow, MethodSummary};
pub use config::{ExperimentConfig, FsaGate, Method, NoiseLevel, ScenarioConfig};
pub use ledger::{CommLedger, MessageKind, MessageRecord};
pub use pipeline::{run_pipeline, AgentPose, PipelineOutput, FUSED_CHANNELS};
pub use report::{emit_alignment_report, emit_sweep_report, write_atomic};
pub use scenario::{generate_scenario, scenario_seed, AgentState, Scenario};
pub use selftest::{run_selftest, SelftestCheck, SelftestReport};
pub use sweep::{run_noise_sweep, SweepCell, SweepReport, SweepRow};

use crate::baselines::BaselineError;
use crate::detection::DetectionError;
use crate::fusion::FusionError;
use crate::pgc::PgcError;
use crate::temporal::TemporalError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error(transparent)]
    Pgc(#[from] PgcError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

impl HarnessError {
    /// Process exit code: 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}

/// Runs `f` over `0..n`, in a dedicated pool when `threads > 1`. Output order is
/// always the index order.
pub(crate) fn map_indexed<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if threads > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => return pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(e) => log::warn!("falling back to sequential execution: {e}"),
        }
    }
    (0..n).map(f).collect()
}
