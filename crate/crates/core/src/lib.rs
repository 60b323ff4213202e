//! Sparse-visibility reconstruction for radio interferometric imaging.
//!
//! The pipeline simulates gridded visibilities from synthetic skies, pretrains
//! a visibility encoder and an image encoder with cross-modal contrastive
//! alignment and complementary masked prediction, then fine-tunes the
//! visibility encoder together with a per-cell reconstruction network that
//! maps sparse visibilities to dense ones.

pub mod error;
pub mod fourier;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod numerics;
pub mod observation;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
