//! Hand-differentiated prediction heads: attention pooling, dish-only /
//! concatenation / gated fusion, Smooth-L1 loss and Adam.
//!
//! All arithmetic is `f64`; embeddings are widened on ingestion.

mod adam;
mod checkpoint;
mod linear;
mod loss;
mod model;
mod pool;

use thiserror::Error;

pub use adam::{adam_step, AdamState, DEFAULT_LR};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use linear::Linear;
pub use loss::smooth_l1;
pub use model::{
    init_model, FusionModel, FusionParams, ForwardCache, HeadConfig, Variant, DEFAULT_ATTN_HIDDEN,
    DEFAULT_DROPOUT, DEFAULT_HIDDEN, GATE_INIT, OUTPUTS,
};
pub use pool::{attention_pool, AttentionPool, PoolMode};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("fusion variant requires a non-empty process bag")]
    MissingProcess,
    #[error("empty bag")]
    EmptyBag,
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl FusionModel {
    /// Applies one Adam update with `grads` shaped like this model.
    pub fn adam_step(&mut self, grads: &FusionParams, state: &mut AdamState) -> Result<(), ModelError> {
        let g = grads.slices();
        let mut p = self.params_mut().slices_mut();
        adam_step(&mut p, &g, state)
    }
}
