//! Two-branch segment descriptor network with hand-written reverse-mode
//! gradients.
//!
//! Training runs in f32; gradient checking instantiates the same code in
//! f64. Everything is deterministic for a fixed seed in single-threaded
//! mode, and batch parallelism reduces in sample order so thread count
//! does not change results.

mod checkpoint;
mod gradcheck;
mod input;
mod layers;
mod model;
mod scalar;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{activation_margin, gradient_check, GradCheckReport, NEAR_ZERO_GRAD};
pub use input::{
    augment_rotate, normalize_inputs, select_view, select_view_by, voxels_to_feat, DatasetStats,
    ViewQuery, VisualTensor, MIN_MASK_AREA,
};
pub use layers::{softmax, softmax_cross_entropy, Conv2d, Conv3d, Linear};
pub use model::{
    forward, forward_trace, loss_and_grads, loss_only, ForwardOutput, ForwardTrace, NetConfig,
    NetError, NetParams, GEOM_CHANNELS, GEOM_FC, VISUAL_CHANNELS,
};
pub use scalar::Scalar;
pub use tensor::{Feat2, Feat3};
pub use train::{
    train, validation_split, EpochStats, TrainConfig, TrainOutcome, TrainSample,
};

use crate::types::{Descriptor, TypeError};

/// Converts a network output vector into a validated descriptor.
pub fn descriptor_from_output<T: Scalar>(values: &[T]) -> Result<Descriptor, TypeError> {
    let v: Vec<f64> = values.iter().map(|x| x.to_f64()).collect();
    Descriptor::new(&v)
}
