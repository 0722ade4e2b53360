//! A small reverse-mode autodiff engine sized for the toy denoiser.
//!
//! Tensors are dense, row-major and channels-last. The [`Graph`] records every
//! operation of one forward pass; [`Graph::backward`] walks it in reverse and
//! returns gradients for the parameters that took part.

mod graph;
mod optim;
mod params;
mod real;
mod tensor;

pub use graph::{Gradients, Graph, NodeId};
pub use optim::{Adam, AdamConfig, AdamState};
pub use params::{ParamId, ParamStore};
pub use real::Real;
pub use tensor::Tensor;
