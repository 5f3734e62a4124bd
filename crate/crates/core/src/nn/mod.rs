//! Differentiable building blocks with hand-written reverse passes.
//!
//! Every block stores its parameters as [`Slot`]s into one flat vector
//! described by a [`ParamLayout`]. `forward` returns the output together with
//! whatever the reverse pass needs; `backward` accumulates parameter
//! cotangents into a flat gradient vector of the same layout and returns the
//! input cotangent.

mod attention;
pub mod gradcheck;
mod grid;
mod knn;
mod layers;
mod loc;
mod params;

pub use attention::{AttentionCache, CrossAttention};
pub use gradcheck::{finite_difference_check, GradCheckOptions, GradCheckReport, GradOp};
pub use grid::{dot, matmul, matmul_nt, matmul_tn_acc, FeatureGrid};
pub use knn::knn_neighborhoods;
pub use layers::{
    avg_pool_rows, avg_pool_rows_backward, context_norm, context_norm_backward, softmax_in_place,
    softmax_rows, softmax_rows_backward, ContextNormCache, Linear, Mlp, MlpCache, NORM_EPS,
};
pub use loc::{LocBlock, LocCache};
pub use params::{BlockInfo, Init, ParamLayout, PatternHasher, Slot};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: (usize, usize), got: (usize, usize) },
    #[error("context normalisation needs at least 2 rows, got {rows}")]
    InsufficientContext { rows: usize },
    #[error("empty input")]
    Empty,
    #[error("attention needs at least one key")]
    EmptyKeys,
    #[error("neighbourhood size {k} needs more than {k} rows, got {rows}")]
    KTooLarge { k: usize, rows: usize },
    #[error("{channels} channels cannot be split into {heads} heads")]
    Heads { channels: usize, heads: usize },
}
