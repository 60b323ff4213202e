//! Synthetic galaxy-like skies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RealGrid, RngStream};

/// Nonnegative brightness grid with peak at most 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SkyImage {
    grid: RealGrid,
}

impl SkyImage {
    pub fn new(grid: RealGrid) -> Result<Self> {
        if let Some(bad) = grid
            .data
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::invalid(format!(
                "sky brightness must lie in [0, 1], found {bad}"
            )));
        }
        Ok(SkyImage { grid })
    }

    pub fn grid(&self) -> &RealGrid {
        &self.grid
    }

    pub fn into_grid(self) -> RealGrid {
        self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }
}

/// A single emission component. Positions are pixel offsets from the grid
/// center; `angle` is in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    Gaussian {
        x: f64,
        y: f64,
        amplitude: f64,
        sigma_major: f64,
        sigma_minor: f64,
        angle: f64,
    },
    Point {
        x: f64,
        y: f64,
        amplitude: f64,
    },
    /// Logarithmic two-armed modulation multiplied onto a Gaussian disk.
    Spiral {
        x: f64,
        y: f64,
        amplitude: f64,
        sigma: f64,
        pitch: f64,
        phase: f64,
    },
}

/// Ranges the random components are drawn from, plus optional fixed
/// components that are always rendered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkyRecipe {
    pub fixed: Vec<Component>,
    /// Inclusive count range of elliptical Gaussian blobs.
    pub gaussians: [usize; 2],
    /// Inclusive count range of point sources.
    pub points: [usize; 2],
    /// Probability of adding a spiral-arm perturbation.
    pub spiral_probability: f64,
    /// Major-axis width range in pixels.
    pub sigma: [f64; 2],
    /// Minor/major axis ratio range.
    pub axis_ratio: [f64; 2],
    /// Blob centers are drawn within this fraction of the half-width.
    pub spread: f64,
    pub point_amplitude: [f64; 2],
}

impl Default for SkyRecipe {
    fn default() -> Self {
        SkyRecipe {
            fixed: Vec::new(),
            gaussians: [1, 3],
            points: [0, 2],
            spiral_probability: 0.3,
            sigma: [1.5, 5.0],
            axis_ratio: [0.3, 1.0],
            spread: 0.45,
            point_amplitude: [0.2, 0.8],
        }
    }
}

impl SkyRecipe {
    /// Recipe that renders exactly the given components.
    pub fn fixed(components: Vec<Component>) -> Self {
        SkyRecipe {
            fixed: components,
            gaussians: [0, 0],
            points: [0, 0],
            spiral_probability: 0.0,
            ..SkyRecipe::default()
        }
    }

    fn is_empty(&self) -> bool {
        self.fixed.is_empty()
            && self.gaussians[1] == 0
            && self.points[1] == 0
            && self.spiral_probability <= 0.0
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("sky recipe has no components"));
        }
        if self.gaussians[0] > self.gaussians[1] || self.points[0] > self.points[1] {
            return Err(Error::invalid("sky recipe count ranges must be ordered"));
        }
        if !(self.sigma[0] > 0.0 && self.sigma[0] <= self.sigma[1]) {
            return Err(Error::invalid("sky recipe sigma range must be positive and ordered"));
        }
        if !(self.axis_ratio[0] > 0.0 && self.axis_ratio[0] <= self.axis_ratio[1]) {
            return Err(Error::invalid("sky recipe axis ratio range must be positive and ordered"));
        }
        Ok(())
    }
}

/// Draws the components of one sky.
pub fn sample_components(recipe: &SkyRecipe, size: usize, rng: &mut RngStream) -> Vec<Component> {
    let mut out = recipe.fixed.clone();
    let half = size as f64 / 2.0;
    let reach = recipe.spread * half;
    let n_gauss = rng.int_range(recipe.gaussians[0], recipe.gaussians[1]);
    for i in 0..n_gauss {
        // The first blob is the host galaxy: brighter and nearer the center.
        let (pos_scale, amp) = if i == 0 {
            (0.3, 1.0)
        } else {
            (1.0, rng.uniform_range(0.25, 0.8))
        };
        let sigma_major = rng.uniform_range(recipe.sigma[0], recipe.sigma[1]);
        let ratio = rng.uniform_range(recipe.axis_ratio[0], recipe.axis_ratio[1]);
        out.push(Component::Gaussian {
            x: rng.uniform_range(-reach, reach) * pos_scale,
            y: rng.uniform_range(-reach, reach) * pos_scale,
            amplitude: amp,
            sigma_major,
            sigma_minor: sigma_major * ratio,
            angle: rng.uniform_range(0.0, std::f64::consts::PI),
        });
    }
    let n_points = rng.int_range(recipe.points[0], recipe.points[1]);
    for _ in 0..n_points {
        out.push(Component::Point {
            x: rng.uniform_range(-reach, reach),
            y: rng.uniform_range(-reach, reach),
            amplitude: rng.uniform_range(recipe.point_amplitude[0], recipe.point_amplitude[1]),
        });
    }
    if recipe.spiral_probability > 0.0 && rng.uniform() < recipe.spiral_probability {
        out.push(Component::Spiral {
            x: rng.uniform_range(-1.0, 1.0),
            y: rng.uniform_range(-1.0, 1.0),
            amplitude: rng.uniform_range(0.4, 0.9),
            sigma: rng.uniform_range(recipe.sigma[1], recipe.sigma[1] * 1.6),
            pitch: rng.uniform_range(1.5, 3.5),
            phase: rng.uniform_range(0.0, 2.0 * std::f64::consts::PI),
        });
    }
    out
}

/// Renders components onto a `size x size` grid and normalizes to peak 1.
pub fn render(components: &[Component], height: usize, width: usize) -> Result<SkyImage> {
    if components.is_empty() {
        return Err(Error::invalid("cannot render a sky with no components"));
    }
    let mut data = vec![0.0; height * width];
    let (cy, cx) = ((height / 2) as f64, (width / 2) as f64);
    for comp in components {
        match *comp {
            Component::Gaussian {
                x,
                y,
                amplitude,
                sigma_major,
                sigma_minor,
                angle,
            } => {
                let (s, c) = angle.sin_cos();
                for r in 0..height {
                    for col in 0..width {
                        let dx = col as f64 - cx - x;
                        let dy = r as f64 - cy - y;
                        let a = (dx * c + dy * s) / sigma_major;
                        let b = (-dx * s + dy * c) / sigma_minor;
                        data[r * width + col] += amplitude * (-0.5 * (a * a + b * b)).exp();
                    }
                }
            }
            Component::Point { x, y, amplitude } => {
                let col = (cx + x).round();
                let r = (cy + y).round();
                if col >= 0.0 && r >= 0.0 && (col as usize) < width && (r as usize) < height {
                    data[r as usize * width + col as usize] += amplitude;
                }
            }
            Component::Spiral {
                x,
                y,
                amplitude,
                sigma,
                pitch,
                phase,
            } => {
                for r in 0..height {
                    for col in 0..width {
                        let dx = col as f64 - cx - x;
                        let dy = r as f64 - cy - y;
                        let rad = dx.hypot(dy);
                        let theta = dy.atan2(dx);
                        let arms = 0.5 * (1.0 + (2.0 * theta - pitch * (rad + 1.0).ln() + phase).cos());
                        let disk = (-0.5 * (rad / sigma).powi(2)).exp();
                        data[r * width + col] += amplitude * disk * arms;
                    }
                }
            }
        }
    }
    let peak = data.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::invalid("rendered sky has no positive flux inside the grid"));
    }
    for v in &mut data {
        *v = (*v / peak).clamp(0.0, 1.0);
    }
    SkyImage::new(RealGrid::new(height, width, data)?)
}

/// Random sky from a recipe; a pure function of `(recipe, rng state)`.
pub fn synth_sky(recipe: &SkyRecipe, size: usize, rng: &mut RngStream) -> Result<SkyImage> {
    recipe.validate()?;
    let comps = sample_components(recipe, size, rng);
    if comps.is_empty() {
        // Ranges allowed zero components this time; fall back to one blob.
        let fallback = SkyRecipe {
            gaussians: [1, 1],
            ..recipe.clone()
        };
        return render(&sample_components(&fallback, size, rng), size, size);
    }
    render(&comps, size, size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_gaussian_peaks_at_center_and_falls_off() {
        let sky = render(
            &[Component::Gaussian {
                x: 0.0,
                y: 0.0,
                amplitude: 1.0,
                sigma_major: 4.0,
                sigma_minor: 4.0,
                angle: 0.0,
            }],
            32,
            32,
        )
        .unwrap();
        let g = sky.grid();
        assert_eq!(g.get(16, 16), 1.0);
        for k in 16..31 {
            assert!(g.get(16, k + 1) < g.get(16, k));
            assert!(g.get(k + 1, 16) < g.get(k, 16));
        }
        for k in 1..=16 {
            assert!(g.get(16, k - 1) < g.get(16, k));
        }
    }

    #[test]
    fn empty_recipe_is_an_error() {
        let mut rng = RngStream::new(1, 1);
        let recipe = SkyRecipe::fixed(vec![]);
        assert!(synth_sky(&recipe, 32, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_sky() {
        let recipe = SkyRecipe::default();
        let a = synth_sky(&recipe, 32, &mut RngStream::new(5, 3)).unwrap();
        let b = synth_sky(&recipe, 32, &mut RngStream::new(5, 3)).unwrap();
        assert_eq!(a, b);
        let c = synth_sky(&recipe, 32, &mut RngStream::new(5, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn skies_are_normalized() {
        let recipe = SkyRecipe::default();
        for s in 0..20 {
            let sky = synth_sky(&recipe, 32, &mut RngStream::new(9, s)).unwrap();
            let max = sky.grid().data.iter().copied().fold(0.0, f64::max);
            assert_eq!(max, 1.0);
            assert!(sky.grid().data.iter().all(|&v| v >= 0.0));
        }
    }
}
