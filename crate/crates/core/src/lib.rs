//! Concept-based neural reasoning: a concept-embedding encoder feeding a head
//! that writes and executes one fuzzy logic rule per sample and class.

pub mod analysis;
pub mod autodiff;
pub mod datasets;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod fuzzy;
pub mod nn;
pub mod pipeline;
pub mod reasoner;
pub mod rules;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use fuzzy::Semantics;
pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type TensorF32 = autodiff::Tensor<f32>;
pub type TensorF64 = autodiff::Tensor<f64>;
pub type ConceptModelF32 = pipeline::ConceptModel<f32>;
pub type ConceptModelF64 = pipeline::ConceptModel<f64>;
pub type TrainedModelF32 = pipeline::TrainedModel<f32>;
pub type TrainedModelF64 = pipeline::TrainedModel<f64>;
