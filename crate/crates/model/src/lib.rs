//! Stereo 2D heatmap estimation and 3D pose lifting networks.

pub mod checkpoint;
pub mod config;
pub mod losses;
pub mod pose2d;
pub mod pose3d;
pub mod resnet;

pub use config::{ModelConfig, Pose2DConfig, Pose3DConfig, Variant};
pub use pose2d::{Pose2DNet, Pose2DOutput};
pub use pose3d::{Pose3DNet, Pose3DOutput};

use egopose_core::hash::mix_seed;
use egopose_nn::{Float, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape { expected: Vec<usize>, actual: Vec<usize> },
    #[error("{path} was written for config {found}, current config hashes to {expected}")]
    ConfigMismatch {
        path: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Core(#[from] egopose_core::Error),
    #[error(transparent)]
    Nn(#[from] egopose_nn::NnError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Both modules sharing one parameter store.
#[derive(Debug, Clone)]
pub struct Models<T> {
    pub store: ParamStore<T>,
    pub pose2d: Pose2DNet,
    pub pose3d: Pose3DNet,
}

impl<T: Float> Models<T> {
    /// Initializes both modules; each draws from its own seed-derived stream
    /// so the 2D initialization does not depend on the 3D config.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let pose2d = Pose2DNet::new(&mut store, &config.pose2d, &mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 2)))?;
        let pose3d = Pose3DNet::new(
            &mut store,
            &config.pose3d,
            config.pose2d.variant.views(),
            &mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 3)),
        )?;
        Ok(Self { store, pose2d, pose3d })
    }
}
