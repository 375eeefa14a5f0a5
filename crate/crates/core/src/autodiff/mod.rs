//! Define-by-run reverse-mode automatic differentiation with an Adam optimizer.
//!
//! Every forward pass builds a fresh graph of [`Tensor`] nodes. Model weights
//! live in a [`ParamSet`]; a pass starts by turning them into leaf tensors and
//! ends with `loss.backward()` followed by an [`AdamState::step`].

mod adam;
mod ops;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState, WeightDecay};
pub use ops::{broadcast_shape, sigmoid};
pub use params::{ParamId, ParamSet, Parameter};
pub use tensor::Tensor;
