//! Reverse-mode automatic differentiation over an explicit, append-only graph.
//!
//! Backward passes are themselves recorded as graph operations, so gradients
//! can be differentiated again (needed to push gradients through unrolled
//! training loops). Shapes never broadcast implicitly; the explicit
//! `broadcast_*` ops cover the scalar, row and column cases.

mod backward;
mod graph;
mod tensor;

pub use graph::{ActSpec, Activation, Graph, Var};
pub use tensor::Tensor;
