use crate::error::{Error, Result};
use crate::fourier::{fft2_real, ifft2};
use crate::numerics::{ComplexGrid, RealGrid, RngStream};
use crate::observation::mask::UvMask;
use crate::observation::sky::SkyImage;

/// Observed visibilities: exactly zero wherever the mask is unset.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVisibility {
    grid: ComplexGrid,
    mask: UvMask,
    noise_sigma: f64,
}

impl SparseVisibility {
    pub fn new(grid: ComplexGrid, mask: UvMask, noise_sigma: f64) -> Result<Self> {
        if grid.height != mask.height || grid.width != mask.width {
            return Err(Error::shape(
                "sparse visibility",
                format!(
                    "grid {}x{} with mask {}x{}",
                    grid.height, grid.width, mask.height, mask.width
                ),
            ));
        }
        if !(noise_sigma >= 0.0) {
            return Err(Error::invalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
        }
        for i in 0..grid.len() {
            if !mask.is_set(i) && (grid.re[i] != 0.0 || grid.im[i] != 0.0) {
                return Err(Error::invalid(format!(
                    "sparse visibility has a nonzero value at unsampled cell {i}"
                )));
            }
        }
        Ok(SparseVisibility {
            grid,
            mask,
            noise_sigma,
        })
    }

    pub fn grid(&self) -> &ComplexGrid {
        &self.grid
    }

    pub fn mask(&self) -> &UvMask {
        &self.mask
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }
}

/// Zeroes every unsampled cell.
pub fn apply_mask(grid: &ComplexGrid, mask: &UvMask) -> Result<ComplexGrid> {
    if grid.height != mask.height || grid.width != mask.width {
        return Err(Error::shape("apply_mask", "grid and mask shapes differ"));
    }
    let mut out = grid.clone();
    for i in 0..out.len() {
        if !mask.is_set(i) {
            out.re[i] = 0.0;
            out.im[i] = 0.0;
        }
    }
    Ok(out)
}

/// Dense visibilities of `sky` and their masked, noisy observation.
///
/// Complex Gaussian noise with per-component standard deviation
/// `noise_sigma` is added at sampled cells only.
pub fn sample_visibility(
    sky: &SkyImage,
    mask: &UvMask,
    noise_sigma: f64,
    rng: &mut RngStream,
) -> Result<(ComplexGrid, SparseVisibility)> {
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    if sky.height() != mask.height || sky.width() != mask.width {
        return Err(Error::shape(
            "sample_visibility",
            format!(
                "sky {}x{} with mask {}x{}",
                sky.height(),
                sky.width(),
                mask.height,
                mask.width
            ),
        ));
    }
    if mask.popcount() == 0 {
        return Err(Error::invalid("mask samples no uv cells"));
    }
    let dense = fft2_real(sky.grid())?;
    let mut sparse = apply_mask(&dense, mask)?;
    if noise_sigma > 0.0 {
        for i in 0..sparse.len() {
            if mask.is_set(i) {
                sparse.re[i] += noise_sigma * rng.normal();
                sparse.im[i] += noise_sigma * rng.normal();
            }
        }
    }
    let sparse = SparseVisibility::new(sparse, mask.clone(), noise_sigma)?;
    Ok((dense, sparse))
}

/// Real part of the zero-filled inverse transform, min-max normalized.
pub fn dirty_image(sparse: &SparseVisibility) -> Result<RealGrid> {
    Ok(image_from_visibility(sparse.grid())?.min_max_normalized())
}

/// Real part of the inverse transform, without normalization.
pub fn image_from_visibility(vis: &ComplexGrid) -> Result<RealGrid> {
    Ok(ifft2(vis)?.real_part())
}
