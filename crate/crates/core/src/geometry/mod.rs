//! Pose algebra, point containers and pose-noise models.

mod cloud;
mod noise;
mod pose;

pub use cloud::{transform_points, PointCloud, POINT_CLOUD_MAGIC};
pub use noise::{perturb_pose, GaussianPoseNoise, NoiseField, StructuredLocNoise};
pub use pose::{normalize_angle, pose_error, relative, rot_z, Pose, Pose2D};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere a seeded stream is needed.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of `seed`; used for per-iteration and per-scenario substreams.
pub fn substream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniformly random rotation (via a normalized Gaussian quaternion) and a
/// translation uniform in `[-extent, extent]^3`.
pub fn random_pose<R: Rng + ?Sized>(rng: &mut R, extent: f64) -> Pose {
    use rand_distr::{Distribution, StandardNormal};
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let uq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    let t = nalgebra::Vector3::new(
        rng.random_range(-extent..=extent),
        rng.random_range(-extent..=extent),
        rng.random_range(-extent..=extent),
    );
    Pose::new(uq.to_rotation_matrix().into_inner(), t)
}

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid noise parameters: {0}")]
    InvalidNoise(String),
    #[error("point cloud parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("missing CPALPC01 magic header")]
    BadMagic,
    #[error("binary payload of {0} bytes is not a whole number of f32 triples")]
    Truncated(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
