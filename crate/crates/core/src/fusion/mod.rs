//! Switcher MLP, grasp-aware feature fusion and the attention adapter, with
//! analytic reverse-mode gradients.

mod attention;
mod dense;
mod fuse;
mod mlp;

pub use attention::{
    multihead_attention, multihead_attention_forward, AttentionContext, AttentionGrads,
    AttentionParams,
};
pub use fuse::{grasp_aware_fuse, grasp_aware_fuse_with, FuseContext, FuseGrads, SoftmaxAxis};
pub use mlp::{
    switcher_decision, switcher_forward, switcher_loss, Linear, MlpParams, DEFAULT_HIDDEN,
};

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("gradient shape {got:?} does not match cached forward output {cached:?}")]
    StaleCache { cached: Vec<usize>, got: Vec<usize> },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
