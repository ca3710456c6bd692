//! Hand-written convolutional position regressor: tensors, layers with
//! explicit backward passes, Adam and the training loop.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;
pub mod train;
pub mod weights;

use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use network::{LayerSpec, Network, NetworkSpec};
pub use tensor::Tensor;
pub use train::{predict, train, EpochStats, TrainConfig, TrainReport};
pub use weights::Weights;

/// Affine map between world meters and the regression target in [−1, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelFrame {
    pub center: [f64; 3],
    pub half_extent: [f64; 3],
}

impl LabelFrame {
    pub fn new(center: [f64; 3], half_extent: [f64; 3]) -> Self {
        LabelFrame { center, half_extent }
    }

    pub fn normalize(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| (p[i] - self.center[i]) / self.half_extent[i])
    }

    pub fn denormalize(&self, q: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| self.center[i] + q[i] * self.half_extent[i])
    }

    /// Whether a world point lies within `factor` times the frame box.
    pub fn contains(&self, p: [f64; 3], factor: f64) -> bool {
        self.normalize(p).iter().all(|v| v.abs() <= factor)
    }
}
