//! uv sampling patterns from parametric earth-rotation tracks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boolean sampling pattern on the centered uv grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UvMask {
    pub height: usize,
    pub width: usize,
    bits: Vec<bool>,
}

impl UvMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::shape(
                "uv mask",
                format!("{height}x{width} needs {} cells, got {}", height * width, bits.len()),
            ));
        }
        Ok(UvMask {
            height,
            width,
            bits,
        })
    }

    pub fn full(height: usize, width: usize) -> Self {
        UvMask {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn empty(height: usize, width: usize) -> Self {
        UvMask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.bits[i] = on;
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn coverage(&self) -> f64 {
        self.popcount() as f64 / self.bits.len() as f64
    }

    pub fn mirror_index(&self, i: usize) -> usize {
        let (r, c) = (i / self.width, i % self.width);
        ((self.height - r) % self.height) * self.width + (self.width - c) % self.width
    }

    /// Adds the `(-u, -v)` partner of every sampled cell.
    pub fn symmetrize(&mut self) {
        for i in 0..self.bits.len() {
            if self.bits[i] {
                let m = self.mirror_index(i);
                self.bits[m] = true;
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.bits.len()).all(|i| self.bits[i] == self.bits[self.mirror_index(i)])
    }
}

/// Antenna position in an earth-fixed equatorial frame (any length unit; the
/// uv extent is rescaled to the grid).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Antenna {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Parameters of the track synthesizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayConfig {
    pub antennas: Vec<Antenna>,
    /// Hour-angle sweep in hours.
    pub hour_angle: [f64; 2],
    /// Source declination in degrees.
    pub declination: f64,
    /// The longest projected baseline lands at this fraction of the grid
    /// half-width.
    pub fill: f64,
    /// Hour-angle samples per track.
    pub steps: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            antennas: eht_like_antennas(),
            hour_angle: [-1.25, 1.25],
            declination: 12.39,
            fill: 0.95,
            steps: 720,
        }
    }
}

/// Eight stations at the approximate geocentric positions (km) of a global
/// millimetre VLBI array. Two pairs are nearly co-located and supply very
/// short spacings.
pub fn eht_like_antennas() -> Vec<Antenna> {
    [
        (2225.061, -5440.057, -2481.681),
        (2225.040, -5441.198, -2479.303),
        (-5464.585, -2493.001, 2150.654),
        (-5464.555, -2492.928, 2150.797),
        (-1828.796, -5054.407, 3427.865),
        (-768.716, -5988.507, 2063.355),
        (5088.968, -301.682, 3825.016),
        (0.0, 0.0, -6359.610),
    ]
    .into_iter()
    .map(|(x, y, z)| Antenna { x, y, z })
    .collect()
}

/// uv coordinates of baseline `b = a2 - a1` at hour angle `h` (radians) for
/// declination `dec` (radians).
pub fn baseline_uv(b: (f64, f64, f64), h: f64, dec: f64) -> (f64, f64) {
    let (sh, ch) = h.sin_cos();
    let (sd, cd) = dec.sin_cos();
    let u = sh * b.0 + ch * b.1;
    let v = -sd * ch * b.0 + sd * sh * b.1 + cd * b.2;
    (u, v)
}

/// Continuous uv tracks, one per antenna pair, before rasterization.
pub fn uv_tracks(cfg: &ArrayConfig) -> Result<Vec<Vec<(f64, f64)>>> {
    if cfg.antennas.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 antennas, got {}",
            cfg.antennas.len()
        )));
    }
    if cfg.steps < 2 || cfg.hour_angle[1] < cfg.hour_angle[0] {
        return Err(Error::invalid("hour-angle sweep needs >= 2 steps and an ordered range"));
    }
    let dec = cfg.declination.to_radians();
    let hour = std::f64::consts::PI / 12.0;
    let mut tracks = Vec::new();
    for i in 0..cfg.antennas.len() {
        for j in i + 1..cfg.antennas.len() {
            let (a, b) = (cfg.antennas[i], cfg.antennas[j]);
            let base = (b.x - a.x, b.y - a.y, b.z - a.z);
            let track = (0..cfg.steps)
                .map(|s| {
                    let t = s as f64 / (cfg.steps - 1) as f64;
                    let ha = cfg.hour_angle[0] + t * (cfg.hour_angle[1] - cfg.hour_angle[0]);
                    baseline_uv(base, ha * hour, dec)
                })
                .collect();
            tracks.push(track);
        }
    }
    Ok(tracks)
}

/// Rasterizes every track and its conjugate onto a `size x size` grid.
pub fn synth_uv_mask(cfg: &ArrayConfig, size: usize) -> Result<UvMask> {
    if size < 2 {
        return Err(Error::invalid("uv grid must be at least 2x2"));
    }
    if !(cfg.fill > 0.0 && cfg.fill <= 1.0) {
        return Err(Error::invalid("fill must be in (0, 1]"));
    }
    let tracks = uv_tracks(cfg)?;
    let max_len = tracks
        .iter()
        .flatten()
        .map(|(u, v)| u.hypot(*v))
        .fold(0.0, f64::max);
    let half = (size / 2) as f64;
    let scale = if max_len > 0.0 {
        cfg.fill * (half - 1.0) / max_len
    } else {
        0.0
    };
    let mut mask = UvMask::empty(size, size);
    for (u, v) in tracks.iter().flatten() {
        for sign in [1.0, -1.0] {
            let c = (sign * u * scale).round() as i64 + half as i64;
            let r = (sign * v * scale).round() as i64 + half as i64;
            if (0..size as i64).contains(&c) && (0..size as i64).contains(&r) {
                mask.set(r as usize * size + c as usize, true);
            }
        }
    }
    mask.symmetrize();
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_antennas() -> ArrayConfig {
        ArrayConfig {
            antennas: vec![
                Antenna { x: 0.0, y: 0.0, z: 0.0 },
                Antenna { x: 3000.0, y: 1000.0, z: 2000.0 },
            ],
            hour_angle: [-6.0, 6.0],
            declination: 30.0,
            ..ArrayConfig::default()
        }
    }

    #[test]
    fn needs_two_antennas() {
        let cfg = ArrayConfig {
            antennas: vec![Antenna { x: 0.0, y: 0.0, z: 0.0 }],
            ..ArrayConfig::default()
        };
        assert!(synth_uv_mask(&cfg, 32).is_err());
    }

    #[test]
    fn eight_antennas_give_28_tracks() {
        let tracks = uv_tracks(&ArrayConfig::default()).unwrap();
        assert_eq!(tracks.len(), 28);
    }

    #[test]
    fn single_baseline_traces_an_ellipse() {
        // u² + ((v - v0) / sin δ)² = bx² + by² along the whole track.
        let cfg = two_antennas();
        let tracks = uv_tracks(&cfg).unwrap();
        assert_eq!(tracks.len(), 1);
        let dec = cfg.declination.to_radians();
        let v0 = 2000.0 * dec.cos();
        let r2 = 3000.0f64.powi(2) + 1000.0f64.powi(2);
        for &(u, v) in &tracks[0] {
            let lhs = u * u + ((v - v0) / dec.sin()).powi(2);
            assert!((lhs - r2).abs() / r2 < 1e-12);
        }
        let mask = synth_uv_mask(&cfg, 32).unwrap();
        assert!(mask.is_symmetric());
        assert!(mask.popcount() > 0);
    }

    #[test]
    fn masks_are_symmetric() {
        let mask = synth_uv_mask(&ArrayConfig::default(), 64).unwrap();
        assert!(mask.is_symmetric());
        let mut again = mask.clone();
        again.symmetrize();
        assert_eq!(again, mask);
    }
}
