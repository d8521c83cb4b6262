//! Networks, losses and optimizers.
//!
//! Everything runs on [`Graph`](crate::autodiff::Graph), so the same code
//! serves plain training and training that is itself differentiated.

mod cell;
mod loss;
mod mlp;
mod optim;
mod params;
mod supernet;

pub use cell::{cell_forward, CELL_PARAMS};
pub use loss::{bce_elementwise, bce_logits_elementwise, bce_loss, cross_entropy, l2_penalty, mse_loss, with_l2};
pub use mlp::mlp_forward;
pub use optim::{GraphOptimizer, OptimizerConfig, OptimizerKind, OptimizerState};
pub use params::{NetworkBlueprint, NetworkKind, ParamSet};
pub use supernet::{PreparedData, SuperNetwork};
