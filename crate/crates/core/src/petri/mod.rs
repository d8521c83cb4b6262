//! The Synthetic Petri Dish: synthetic data trained so that motif-networks
//! fit on it rank motifs the way full-scale training does.
//!
//! The inner loop trains every motif-network from the same `θ_init` on the
//! synthetic training inputs and scores it on the synthetic validation
//! inputs. The outer loop moves both input tensors down the gradient of the
//! mean squared error between normalized inner losses and normalized
//! ground-truth losses, differentiating through the whole inner loop.

mod hyper;
mod inner;
mod model;
mod normalize;

pub use hyper::{PetriHyper, SyntheticDataset};
pub use inner::{inner_loop, inner_loop_graph, inner_loop_independent, inner_loop_values, DataVars};
pub use model::{outer_loss, outer_loss_value, select_hypers, split_half, stream_rng, train, PetriModel};
pub use normalize::{normalize, normalize_var};
