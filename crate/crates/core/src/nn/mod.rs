//! Minimal differentiable MLP stack used by the deep agents: batched
//! forward/backward passes, Adam, target-network soft updates, OU exploration
//! noise and the squashed-Gaussian policy head.

mod adam;
mod checkpoint;
mod gaussian;
mod mlp;
mod noise;

pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use gaussian::{log_one_minus_tanh_sq, GaussianDraw, SquashedGaussian, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{column, concat_cols, param_count, soft_update, stack_rows, ForwardPass, Gradients, Mlp, OutputActivation};
pub use noise::OuNoise;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input width {got} does not match expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("forward pass is stale: parameters changed or pass belongs to another network")]
    StaleCache,
    #[error("network architectures differ")]
    Architecture,
    #[error("soft-update rate {0} outside (0, 1]")]
    Tau(f64),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
