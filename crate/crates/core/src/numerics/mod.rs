//! Dense tensors, seeded random streams, reverse-mode differentiation and the
//! optimizer.

pub mod adam;
pub mod gradcheck;
pub mod grid;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use grid::{ComplexGrid, RealGrid};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use params::{Gradients, ModelParams, ParamKey, ParamTensor, Section};
pub use rng::RngStream;
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
