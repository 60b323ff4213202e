//! Synthetic datasets of (sparse visibility, sky) pairs and their manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexGrid, RealGrid, RngStream};
use crate::observation::io::{self, VisKind};
use crate::observation::mask::{synth_uv_mask, ArrayConfig, UvMask};
use crate::observation::sky::{synth_sky, SkyImage, SkyRecipe};
use crate::observation::visibility::{sample_visibility, SparseVisibility};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Input to dataset synthesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    #[serde(default = "default_true")]
    pub include_dense: bool,
    #[serde(default)]
    pub sky: SkyRecipe,
    #[serde(default)]
    pub array: ArrayConfig,
}

fn default_true() -> bool {
    true
}

impl DatasetConfig {
    /// 200 skies on 32x32 grids, eight-station array, sigma 0.01, seed 42.
    pub fn canonical() -> Self {
        DatasetConfig {
            count: 200,
            size: 32,
            seed: 42,
            noise_sigma: 0.01,
            include_dense: true,
            sky: SkyRecipe::default(),
            array: ArrayConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("dataset config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        DatasetConfig::from_toml(&fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub id: usize,
    pub sky: String,
    pub sparse: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense: Option<String>,
}

/// `manifest.toml` at the root of a dataset directory. Paths are relative to
/// that directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub mask: String,
    pub coverage: f64,
    pub array: ArrayConfig,
    pub pairs: Vec<PairEntry>,
}

impl DatasetManifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: DatasetManifest =
            toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        if m.count != m.pairs.len() {
            return Err(Error::Config(format!(
                "manifest count {} does not match {} listed pairs",
                m.count,
                m.pairs.len()
            )));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub sky: SkyImage,
    pub sparse: SparseVisibility,
    pub dense: Option<ComplexGrid>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub mask: UvMask,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn size(&self) -> usize {
        self.manifest.size
    }

    pub fn has_dense(&self) -> bool {
        self.samples.iter().all(|s| s.dense.is_some())
    }
}

fn quantize(v: f64) -> f64 {
    f64::from(v as f32)
}

fn quantize_complex(g: &ComplexGrid) -> ComplexGrid {
    ComplexGrid {
        height: g.height,
        width: g.width,
        re: g.re.iter().map(|&v| quantize(v)).collect(),
        im: g.im.iter().map(|&v| quantize(v)).collect(),
    }
}

/// Builds the dataset in memory. Grids are rounded to `f32` so that the
/// in-memory copy equals what [`load_dataset`] reads back from disk.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.count == 0 {
        return Err(Error::invalid("dataset count must be positive"));
    }
    if !cfg.size.is_power_of_two() || cfg.size < 4 {
        return Err(Error::invalid(format!(
            "grid size must be a power of two >= 4, got {}",
            cfg.size
        )));
    }
    let mask = synth_uv_mask(&cfg.array, cfg.size)?;
    let mut samples = Vec::with_capacity(cfg.count);
    let mut pairs = Vec::with_capacity(cfg.count);
    for k in 0..cfg.count {
        let mut sky_rng = RngStream::named(cfg.seed, "sky", k as u64);
        let sky = synth_sky(&cfg.sky, cfg.size, &mut sky_rng)?;
        let sky_q = RealGrid::new(
            cfg.size,
            cfg.size,
            sky.grid().data.iter().map(|&v| quantize(v)).collect(),
        )?;
        let sky = SkyImage::new(sky_q)?;
        let mut noise_rng = RngStream::named(cfg.seed, "noise", k as u64);
        let (dense, sparse) = sample_visibility(&sky, &mask, cfg.noise_sigma, &mut noise_rng)?;
        let sparse = SparseVisibility::new(
            quantize_complex(sparse.grid()),
            mask.clone(),
            cfg.noise_sigma,
        )?;
        let dense = cfg.include_dense.then(|| quantize_complex(&dense));
        pairs.push(PairEntry {
            id: k,
            sky: format!("sky_{k:04}.fimg"),
            sparse: format!("sparse_{k:04}.fvis"),
            dense: cfg.include_dense.then(|| format!("dense_{k:04}.fvis")),
        });
        samples.push(Sample {
            id: k,
            sky,
            sparse,
            dense,
        });
    }
    let manifest = DatasetManifest {
        count: cfg.count,
        size: cfg.size,
        seed: cfg.seed,
        noise_sigma: cfg.noise_sigma,
        mask: "mask.fmsk".to_string(),
        coverage: mask.coverage(),
        array: cfg.array.clone(),
        pairs,
    };
    Ok(Dataset {
        manifest,
        mask,
        samples,
    })
}

/// Writes every file plus the manifest into `dir` (created if missing).
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    io::write_fmsk(&dir.join(&ds.manifest.mask), &ds.mask)?;
    for (s, entry) in ds.samples.iter().zip(&ds.manifest.pairs) {
        io::write_fimg(&dir.join(&entry.sky), s.sky.grid())?;
        io::write_fvis(&dir.join(&entry.sparse), s.sparse.grid(), VisKind::Sparse)?;
        if let (Some(d), Some(path)) = (&s.dense, &entry.dense) {
            io::write_fvis(&dir.join(path), d, VisKind::Dense)?;
        }
    }
    fs::write(dir.join(MANIFEST_FILE), ds.manifest.to_toml()?)?;
    Ok(())
}

pub fn synth_dataset(cfg: &DatasetConfig, dir: &Path) -> Result<Dataset> {
    let ds = generate_dataset(cfg)?;
    write_dataset(&ds, dir)?;
    Ok(ds)
}

fn resolve(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}

/// Reads a dataset directory, validating every file against the manifest.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let manifest = DatasetManifest::from_toml(&text)?;
    let size = manifest.size;
    let mask = io::read_fmsk(&resolve(dir, &manifest.mask))?;
    if mask.height != size || mask.width != size {
        return Err(Error::Config(format!(
            "mask is {}x{}, manifest says {size}",
            mask.height, mask.width
        )));
    }
    let mut samples = Vec::with_capacity(manifest.count);
    for entry in &manifest.pairs {
        let sky_grid = io::read_fimg(&resolve(dir, &entry.sky))?;
        if sky_grid.height != size || sky_grid.width != size {
            return Err(Error::Config(format!("{}: wrong grid size", entry.sky)));
        }
        let sky = SkyImage::new(sky_grid)?;
        let (sparse_grid, kind) = io::read_fvis(&resolve(dir, &entry.sparse))?;
        if kind != VisKind::Sparse {
            return Err(Error::Config(format!("{}: expected sparse visibility", entry.sparse)));
        }
        if sparse_grid.height != size || sparse_grid.width != size {
            return Err(Error::Config(format!("{}: wrong grid size", entry.sparse)));
        }
        let sparse = SparseVisibility::new(sparse_grid, mask.clone(), manifest.noise_sigma)?;
        let dense = match &entry.dense {
            Some(p) => {
                let (g, kind) = io::read_fvis(&resolve(dir, p))?;
                if kind != VisKind::Dense || g.height != size || g.width != size {
                    return Err(Error::Config(format!("{p}: expected {size}x{size} dense visibility")));
                }
                Some(g)
            }
            None => None,
        };
        samples.push(Sample {
            id: entry.id,
            sky,
            sparse,
            dense,
        });
    }
    Ok(Dataset {
        manifest,
        mask,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> DatasetConfig {
        DatasetConfig {
            count: 4,
            ..DatasetConfig::canonical()
        }
    }

    #[test]
    fn write_then_load_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(&small_config(), dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn manifest_count_must_match() {
        let dir = tempfile::tempdir().unwrap();
        synth_dataset(&small_config(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("count = 4", "count = 5");
        fs::write(&path, text).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn missing_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        synth_dataset(&small_config(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("sky_0002.fimg")).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn dense_is_optional() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            include_dense: false,
            ..small_config()
        };
        synth_dataset(&cfg, dir.path()).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert!(!ds.has_dense());
        assert!(!dir.path().join("dense_0000.fvis").exists());
    }

    #[test]
    fn config_parses_from_toml() {
        let cfg = DatasetConfig::from_toml(
            "count = 3\nsize = 16\nseed = 7\nnoise_sigma = 0.0\n[array]\nhour_angle = [-2.0, 2.0]\n",
        )
        .unwrap();
        assert_eq!(cfg.count, 3);
        assert_eq!(cfg.array.hour_angle, [-2.0, 2.0]);
        assert_eq!(cfg.array.antennas.len(), 8);
        assert!(DatasetConfig::from_toml("count = 3\nbogus = 1\n").is_err());
    }
}
