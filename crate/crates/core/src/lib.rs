//! Learned synthetic datasets that rank architectural motifs, with the
//! autodiff engine, networks, ground-truth evaluators and search loop
//! they need.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the experiments use.

pub mod autodiff;
pub mod baseline;
pub mod error;
pub mod experiment;
pub mod ground_truth;
pub mod io;
pub mod motif;
pub mod nn;
pub mod petri;
pub mod scalar;
pub mod search;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = autodiff::Tensor<f64>;
pub type Graph = autodiff::Graph<f64>;
pub type ParamSet = nn::ParamSet<f64>;
pub type MotifNetwork = motif::MotifNetwork<f64>;
pub type SuperNetwork = nn::SuperNetwork<f64>;
pub type PetriModel = petri::PetriModel<f64>;
pub type SyntheticDataset = petri::SyntheticDataset<f64>;
