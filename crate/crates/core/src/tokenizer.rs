//! Aligned token sequences for the two modalities and the complementary
//! token mask.
//!
//! Visibilities are split into equal-area annuli around the uv origin; each
//! annulus becomes one token holding up to `K` sampled cells as
//! `(u, v, re, im)` quadruples. Images are split into square patches. Token
//! `k` of one modality is paired with token `k` of the other.

use crate::error::{Error, Result};
use crate::numerics::{ComplexGrid, RealGrid, RngStream, Tensor};
use crate::observation::SparseVisibility;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Visibility,
    Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub tokens: Tensor,
    pub modality: Modality,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }

    pub fn width(&self) -> usize {
        self.tokens.cols()
    }
}

/// Equal-area annuli `r_k = r_max * sqrt(k / n)` over the disk inscribed in
/// the grid. Cells beyond `r_max` belong to the outermost band.
#[derive(Clone, Debug, PartialEq)]
pub struct BandSpec {
    pub height: usize,
    pub width: usize,
    pub radii: Vec<f64>,
    pub capacity: usize,
}

impl BandSpec {
    pub fn equal_area(height: usize, width: usize, bands: usize, capacity: usize) -> Result<Self> {
        if bands == 0 {
            return Err(Error::invalid("band count must be positive"));
        }
        if capacity == 0 {
            return Err(Error::invalid("band capacity K must be positive"));
        }
        let r_max = height.min(width) as f64 / 2.0;
        let radii = (0..=bands)
            .map(|k| r_max * (k as f64 / bands as f64).sqrt())
            .collect();
        Ok(BandSpec {
            height,
            width,
            radii,
            capacity,
        })
    }

    /// `ceil(1.5 * expected sampled cells per band)` for the given coverage.
    pub fn default_capacity(height: usize, width: usize, bands: usize, coverage: f64) -> usize {
        let expected = coverage * (height * width) as f64 / bands as f64;
        ((1.5 * expected).ceil() as usize).max(1)
    }

    pub fn bands(&self) -> usize {
        self.radii.len() - 1
    }

    pub fn r_max(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    /// Values per band token.
    pub fn token_width(&self) -> usize {
        4 * self.capacity
    }

    /// Centered integer uv coordinates of a cell.
    pub fn uv(&self, index: usize) -> (i64, i64) {
        let (r, c) = (index / self.width, index % self.width);
        (
            c as i64 - (self.width / 2) as i64,
            r as i64 - (self.height / 2) as i64,
        )
    }

    pub fn band_of(&self, index: usize) -> usize {
        let (u, v) = self.uv(index);
        let r2 = (u * u + v * v) as f64;
        let n = self.bands();
        let rmax2 = self.r_max() * self.r_max();
        // Squared comparison keeps the boundaries exact for integer radii.
        (0..n)
            .rev()
            .find(|&k| r2 >= rmax2 * k as f64 / n as f64)
            .unwrap_or(0)
    }
}

/// Which grid cell each token slot came from, per band, plus how many sampled
/// cells were dropped by subsampling.
#[derive(Clone, Debug, PartialEq)]
pub struct BandLayout {
    pub cells: Vec<Vec<usize>>,
    pub sampled_per_band: Vec<usize>,
}

impl BandLayout {
    pub fn discarded(&self) -> usize {
        self.sampled_per_band
            .iter()
            .zip(&self.cells)
            .map(|(s, c)| s - c.len())
            .sum()
    }
}

/// Sampled cells of each band in radial-then-angular order.
pub fn band_members(sparse: &SparseVisibility, spec: &BandSpec) -> Result<Vec<Vec<usize>>> {
    if sparse.height() != spec.height || sparse.width() != spec.width {
        return Err(Error::shape(
            "band_tokenize",
            format!(
                "visibility {}x{} with band spec {}x{}",
                sparse.height(),
                sparse.width(),
                spec.height,
                spec.width
            ),
        ));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.bands()];
    for i in 0..sparse.mask().bits().len() {
        if sparse.mask().is_set(i) {
            members[spec.band_of(i)].push(i);
        }
    }
    for band in &mut members {
        band.sort_by(|&a, &b| {
            let (ua, va) = spec.uv(a);
            let (ub, vb) = spec.uv(b);
            let ra = ua * ua + va * va;
            let rb = ub * ub + vb * vb;
            ra.cmp(&rb).then_with(|| {
                let ta = (va as f64).atan2(ua as f64);
                let tb = (vb as f64).atan2(ub as f64);
                ta.total_cmp(&tb)
            })
        });
    }
    Ok(members)
}

/// One token per band. Bands with more than `K` sampled cells keep a random
/// `K`-subset (drawn from `rng`, order preserved); shorter bands are
/// zero-padded.
pub fn band_tokenize(
    sparse: &SparseVisibility,
    spec: &BandSpec,
    rng: &mut RngStream,
) -> Result<(TokenSequence, BandLayout)> {
    if spec.capacity == 0 {
        return Err(Error::invalid("band capacity K must be positive"));
    }
    let members = band_members(sparse, spec)?;
    let k = spec.capacity;
    let width = spec.token_width();
    let half_u = (spec.width / 2) as f64;
    let half_v = (spec.height / 2) as f64;
    let grid = sparse.grid();
    let mut data = vec![0.0; spec.bands() * width];
    let mut cells = Vec::with_capacity(spec.bands());
    let mut sampled = Vec::with_capacity(spec.bands());
    for (b, band) in members.iter().enumerate() {
        sampled.push(band.len());
        let kept: Vec<usize> = if band.len() > k {
            rng.choose_k(band.len(), k).into_iter().map(|j| band[j]).collect()
        } else {
            band.clone()
        };
        for (slot, &cell) in kept.iter().enumerate() {
            let (u, v) = spec.uv(cell);
            let o = b * width + 4 * slot;
            data[o] = u as f64 / half_u;
            data[o + 1] = v as f64 / half_v;
            data[o + 2] = grid.re[cell];
            data[o + 3] = grid.im[cell];
        }
        cells.push(kept);
    }
    Ok((
        TokenSequence {
            tokens: Tensor::new(spec.bands(), width, data)?,
            modality: Modality::Visibility,
        },
        BandLayout {
            cells,
            sampled_per_band: sampled,
        },
    ))
}

/// Places the `(re, im)` entries of band tokens back on the grid cells they
/// were taken from. Cells not present in the layout are zero.
pub fn band_untokenize(tokens: &Tensor, layout: &BandLayout, height: usize, width: usize) -> Result<ComplexGrid> {
    if tokens.rows() != layout.cells.len() {
        return Err(Error::shape(
            "band_untokenize",
            format!("{} tokens for {} bands", tokens.rows(), layout.cells.len()),
        ));
    }
    let mut out = ComplexGrid::zeros(height, width);
    for (b, band) in layout.cells.iter().enumerate() {
        if 4 * band.len() > tokens.cols() {
            return Err(Error::shape("band_untokenize", "token narrower than its band"));
        }
        let row = tokens.row_slice(b);
        for (slot, &cell) in band.iter().enumerate() {
            out.re[cell] = row[4 * slot + 2];
            out.im[cell] = row[4 * slot + 3];
        }
    }
    Ok(out)
}

fn check_patch(height: usize, width: usize, p: usize) -> Result<()> {
    if p == 0 || height % p != 0 || width % p != 0 {
        return Err(Error::invalid(format!(
            "patch size {p} must divide the {height}x{width} grid"
        )));
    }
    Ok(())
}

/// Row-major `p x p` patches, each flattened row-major.
pub fn patchify(img: &RealGrid, p: usize) -> Result<TokenSequence> {
    check_patch(img.height, img.width, p)?;
    let (ph, pw) = (img.height / p, img.width / p);
    let mut data = Vec::with_capacity(img.data.len());
    for pr in 0..ph {
        for pc in 0..pw {
            for r in 0..p {
                let start = (pr * p + r) * img.width + pc * p;
                data.extend_from_slice(&img.data[start..start + p]);
            }
        }
    }
    Ok(TokenSequence {
        tokens: Tensor::new(ph * pw, p * p, data)?,
        modality: Modality::Image,
    })
}

pub fn unpatchify(tokens: &Tensor, p: usize, height: usize, width: usize) -> Result<RealGrid> {
    check_patch(height, width, p)?;
    let (ph, pw) = (height / p, width / p);
    if tokens.rows() != ph * pw || tokens.cols() != p * p {
        return Err(Error::shape(
            "unpatchify",
            format!(
                "{}x{} tokens for {height}x{width} grid with patch {p}",
                tokens.rows(),
                tokens.cols()
            ),
        ));
    }
    let mut out = vec![0.0; height * width];
    for pr in 0..ph {
        for pc in 0..pw {
            let tok = tokens.row_slice(pr * pw + pc);
            for r in 0..p {
                let start = (pr * p + r) * width + pc * p;
                out[start..start + p].copy_from_slice(&tok[r * p..(r + 1) * p]);
            }
        }
    }
    RealGrid::new(height, width, out)
}

/// Token-level mask: `true` marks indices where the visibility token is
/// visible and the image token is hidden.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskVector {
    bits: Vec<bool>,
}

impl MaskVector {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        let on = bits.iter().filter(|b| **b).count();
        if on == 0 || on == bits.len() {
            return Err(Error::invalid(
                "mask must leave at least one token visible in each modality",
            ));
        }
        Ok(MaskVector { bits })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn ratio(&self) -> f64 {
        self.popcount() as f64 / self.bits.len() as f64
    }

    /// Indices where the mask is set (visibility visible).
    pub fn set_indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    /// Indices where the mask is clear (image visible).
    pub fn clear_indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| !self.bits[i]).collect()
    }

    pub fn complement(&self) -> MaskVector {
        MaskVector {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }
}

/// Exactly `round(ratio * n)` set bits at uniformly random positions.
pub fn sample_mask(n: usize, ratio: f64, rng: &mut RngStream) -> Result<MaskVector> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("mask ratio must be in (0, 1), got {ratio}")));
    }
    let count = (ratio * n as f64).round() as usize;
    if count == 0 || count >= n {
        return Err(Error::invalid(format!(
            "ratio {ratio} over {n} tokens masks {count}; need between 1 and {}",
            n.saturating_sub(1)
        )));
    }
    let mut bits = vec![false; n];
    for i in rng.choose_k(n, count) {
        bits[i] = true;
    }
    MaskVector::from_bits(bits)
}

/// Tokens of one modality that stay visible under a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibleSet {
    pub indices: Vec<usize>,
    pub tokens: Tensor,
}

/// Visibility tokens kept where the mask is set, image tokens kept where it
/// is clear.
pub fn apply_complementary(
    vis_tokens: &Tensor,
    img_tokens: &Tensor,
    mask: &MaskVector,
) -> Result<(VisibleSet, VisibleSet)> {
    if vis_tokens.rows() != img_tokens.rows() || vis_tokens.rows() != mask.len() {
        return Err(Error::shape(
            "apply_complementary",
            format!(
                "{} visibility tokens, {} image tokens, mask of {}",
                vis_tokens.rows(),
                img_tokens.rows(),
                mask.len()
            ),
        ));
    }
    let vis_idx = mask.set_indices();
    let img_idx = mask.clear_indices();
    Ok((
        VisibleSet {
            tokens: vis_tokens.gather_rows(&vis_idx)?,
            indices: vis_idx,
        },
        VisibleSet {
            tokens: img_tokens.gather_rows(&img_idx)?,
            indices: img_idx,
        },
    ))
}

/// Reassembles a full sequence from a visible set and predictions at the
/// complementary indices.
pub fn merge_tokens(visible: &VisibleSet, predicted: &VisibleSet, n: usize) -> Result<Tensor> {
    let cols = visible.tokens.cols();
    if predicted.tokens.cols() != cols {
        return Err(Error::shape("merge", "visible and predicted widths differ"));
    }
    let mut out = vec![0.0; n * cols];
    let mut seen = vec![false; n];
    for set in [visible, predicted] {
        for (j, &i) in set.indices.iter().enumerate() {
            if i >= n || seen[i] {
                return Err(Error::shape(
                    "merge",
                    format!("index {i} is out of range or covered twice"),
                ));
            }
            seen[i] = true;
            out[i * cols..(i + 1) * cols].copy_from_slice(set.tokens.row_slice(j));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::shape("merge", "visible and predicted sets do not cover every token"));
    }
    Tensor::new(n, cols, out)
}
