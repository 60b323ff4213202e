//! Forward model: synthetic skies, uv sampling, noisy sparse visibilities,
//! dirty images, and the on-disk dataset formats.

pub mod dataset;
pub mod io;
pub mod mask;
pub mod sky;
pub mod visibility;

pub use dataset::{
    generate_dataset, load_dataset, synth_dataset, write_dataset, Dataset, DatasetConfig,
    DatasetManifest, Sample,
};
pub use mask::{synth_uv_mask, Antenna, ArrayConfig, UvMask};
pub use sky::{synth_sky, Component, SkyImage, SkyRecipe};
pub use visibility::{apply_mask, dirty_image, sample_visibility, SparseVisibility};
