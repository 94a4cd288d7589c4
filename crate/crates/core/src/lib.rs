//! Vertical graph federated learning (VGFL) simulator with a contrastive,
//! label-free structure poisoning attack and baseline attacks.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the experiment pipeline uses.

pub mod attack;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod partition;
pub mod runtime;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = tensor::Mat<f64>;
pub type Matrix32 = tensor::Mat<f32>;
pub type Tape = tensor::Tape<f64>;
pub type Graph = graph::Graph<f64>;
pub type ClientShard = partition::ClientShard;
