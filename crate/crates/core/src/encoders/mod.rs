//! Trainable projection heads mapping raw per-modality features into the
//! shared embedding space, with exact hand-written backward passes.

mod checkpoint;
mod mlp;
mod model;
mod text;
mod views;

pub use checkpoint::{
    decode_checkpoint, decode_tensors, encode_checkpoint, encode_tensors, load_checkpoint, model_from_tensors,
    model_to_tensors, save_checkpoint, NamedTensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use mlp::{mlp_backward, mlp_forward, MlpCache, MlpGrads, MlpHead};
pub use model::{init_parameters, GradientTape, ModelShape, TrimodalModel};
pub use text::{encode_text, TextCache, TextEncoder, TextGrads};
pub use views::{encode_views, Pooling, ViewEncoder, ViewsCache};

use crate::error::Result;

/// Voxel encoding is a single projection head over voxel features.
pub fn encode_voxel(head: &MlpHead, voxel_features: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
    head.forward(voxel_features)
}
