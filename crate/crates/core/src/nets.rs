//! The learnable networks, their parameter layout, initialization and the
//! checkpoint file.
//!
//! Every network is a small MLP recorded on a [`Tape`]:
//!
//! * `enc_vis`, `enc_img`: per-token two-layer MLP plus learned positional
//!   embeddings, one added to the hidden layer and one to the output.
//! * `pred_v2i`, `pred_i2v`: mean-pool the visible tokens of one modality,
//!   pair the pool with the positional embedding of each target index and map
//!   it to a latent token of the other modality.
//! * `dec_vis`, `dec_img`: per-token two-layer MLP back to token space.
//! * `recon`: per-cell MLP from uv position, the observed value at that cell
//!   and the pooled visibility latent to a dense complex value.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexGrid, ModelParams, NodeId, RngStream, Section, Tape, Tensor};
use crate::observation::io::reader;
use crate::observation::SparseVisibility;
use crate::tokenizer::{band_tokenize, BandSpec};

pub const ENC_VIS: &str = "enc_vis";
pub const ENC_IMG: &str = "enc_img";
pub const PRED_V2I: &str = "pred_v2i";
pub const PRED_I2V: &str = "pred_i2v";
pub const DEC_VIS: &str = "dec_vis";
pub const DEC_IMG: &str = "dec_img";
pub const RECON: &str = "recon";
pub const ARCH: &str = "arch";

pub const ALL_SECTIONS: [&str; 7] = [ENC_VIS, ENC_IMG, PRED_V2I, PRED_I2V, DEC_VIS, DEC_IMG, RECON];

/// Per-cell input features of the reconstruction network.
pub const CELL_FEATURES: usize = 6;

/// Sizes shared by all networks of one model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub height: usize,
    pub width: usize,
    pub n_tok: usize,
    pub patch: usize,
    /// Cells per visibility band token.
    pub band_k: usize,
    pub d_model: usize,
    /// Hidden width of predictors and decoders.
    pub hidden: usize,
    /// Hidden width of the reconstruction network.
    pub recon_hidden: usize,
}

impl Architecture {
    /// Defaults for a square grid: patches of 8 (or the largest power of two
    /// giving at least four tokens), one band per patch and a band capacity
    /// sized for `coverage`.
    pub fn for_grid(size: usize, coverage: f64) -> Result<Self> {
        let mut patch = 8.min(size / 2).max(1);
        while patch > 1 && size % patch != 0 {
            patch /= 2;
        }
        let n_tok = (size / patch) * (size / patch);
        let arch = Architecture {
            height: size,
            width: size,
            n_tok,
            patch,
            band_k: BandSpec::default_capacity(size, size, n_tok, coverage),
            d_model: 64,
            hidden: 128,
            recon_hidden: 64,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.height,
            self.width,
            self.n_tok,
            self.patch,
            self.band_k,
            self.d_model,
            self.hidden,
            self.recon_hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!("architecture sizes must be positive: {self:?}")));
        }
        if self.height % self.patch != 0 || self.width % self.patch != 0 {
            return Err(Error::Config(format!(
                "patch {} does not divide the {}x{} grid",
                self.patch, self.height, self.width
            )));
        }
        let patches = (self.height / self.patch) * (self.width / self.patch);
        if patches != self.n_tok {
            return Err(Error::Config(format!(
                "{patches} image patches but {} tokens",
                self.n_tok
            )));
        }
        Ok(())
    }

    pub fn vis_width(&self) -> usize {
        4 * self.band_k
    }

    pub fn img_width(&self) -> usize {
        self.patch * self.patch
    }

    pub fn band_spec(&self) -> Result<BandSpec> {
        BandSpec::equal_area(self.height, self.width, self.n_tok, self.band_k)
    }

    fn to_values(self) -> Vec<f64> {
        [
            self.height,
            self.width,
            self.n_tok,
            self.patch,
            self.band_k,
            self.d_model,
            self.hidden,
            self.recon_hidden,
        ]
        .iter()
        .map(|&v| v as f64)
        .collect()
    }

    fn from_values(v: &[f64]) -> Result<Self> {
        if v.len() != 8 || v.iter().any(|x| x.fract() != 0.0 || *x < 1.0 || *x > 1e9) {
            return Err(Error::format("CKPT", "arch section is not 8 positive integers"));
        }
        let u = |i: usize| v[i] as usize;
        let arch = Architecture {
            height: u(0),
            width: u(1),
            n_tok: u(2),
            patch: u(3),
            band_k: u(4),
            d_model: u(5),
            hidden: u(6),
            recon_hidden: u(7),
        };
        arch.validate()
            .map_err(|e| Error::format("CKPT", format!("arch section: {e}")))?;
        Ok(arch)
    }

    /// `(tensor, rows, cols)` layout of a network section.
    pub fn layout(&self, section: &str) -> Result<Vec<(&'static str, usize, usize)>> {
        let d = self.d_model;
        let h = self.hidden;
        let rh = self.recon_hidden;
        let encoder = |din: usize| {
            vec![
                ("w1", din, d),
                ("b1", 1, d),
                ("w2", d, d),
                ("b2", 1, d),
                ("pos_in", self.n_tok, d),
                ("pos", self.n_tok, d),
            ]
        };
        let predictor = vec![
            ("pos", self.n_tok, d),
            ("w1", 2 * d, h),
            ("b1", 1, h),
            ("w2", h, d),
            ("b2", 1, d),
        ];
        let decoder = |dout: usize| vec![("w1", d, h), ("b1", 1, h), ("w2", h, dout), ("b2", 1, dout)];
        Ok(match section {
            ENC_VIS => encoder(self.vis_width()),
            ENC_IMG => encoder(self.img_width()),
            PRED_V2I | PRED_I2V => predictor,
            DEC_VIS => decoder(self.vis_width()),
            DEC_IMG => decoder(self.img_width()),
            RECON => vec![
                ("w_cell", CELL_FEATURES, rh),
                ("w_lat", d, rh),
                ("b1", 1, rh),
                ("w2", rh, rh),
                ("b2", 1, rh),
                ("w3", rh, 2),
                ("b3", 1, 2),
            ],
            other => return Err(Error::Config(format!("unknown parameter section {other:?}"))),
        })
    }
}

fn is_weight(name: &str) -> bool {
    name.starts_with('w')
}

/// Glorot-uniform weights, zero biases and positional embeddings.
pub fn init_section(arch: &Architecture, name: &str, rng: &mut RngStream) -> Result<Section> {
    let layout = arch.layout(name)?;
    let mut section = Section::with_layout(name, &layout);
    for t in 0..section.tensors.len() {
        let pt = section.tensors[t].clone();
        if !is_weight(&pt.name) {
            continue;
        }
        let limit = (6.0 / (pt.rows + pt.cols) as f64).sqrt();
        for v in section.slice_mut(t) {
            *v = rng.uniform_range(-limit, limit);
        }
    }
    Ok(section)
}

/// All seven networks, each initialized from its own named stream.
pub fn init_params(arch: &Architecture, seed: u64) -> Result<ModelParams> {
    init_sections(arch, seed, &ALL_SECTIONS)
}

pub fn init_sections(arch: &Architecture, seed: u64, names: &[&str]) -> Result<ModelParams> {
    arch.validate()?;
    let mut params = ModelParams::new();
    for (i, name) in ALL_SECTIONS.iter().enumerate() {
        if names.contains(name) {
            let mut rng = RngStream::named(seed, "init", i as u64);
            params.push(init_section(arch, name, &mut rng)?)?;
        }
    }
    Ok(params)
}

/// True for fine-tuning output: the reconstruction network and visibility
/// encoder are present and the pretraining-only networks are not. A
/// pretraining checkpoint carries an untrained reconstruction network.
pub fn is_finetuned(params: &ModelParams) -> bool {
    params.section(ENC_VIS).is_some()
        && params.section(RECON).is_some()
        && [ENC_IMG, PRED_V2I, PRED_I2V, DEC_VIS, DEC_IMG]
            .iter()
            .all(|s| params.section(s).is_none())
}

pub fn require_sections(params: &ModelParams, names: &[&str]) -> Result<()> {
    for name in names {
        if params.section(name).is_none() {
            return Err(Error::Config(format!("checkpoint is missing section {name:?}")));
        }
    }
    Ok(())
}

fn p(tape: &mut Tape, params: &ModelParams, section: &str, tensor: &str) -> Result<NodeId> {
    let key = params.key(section, tensor)?;
    tape.param(params, key)
}

fn tile_rows(tape: &mut Tape, row_block: NodeId, times: usize) -> Result<NodeId> {
    if times == 1 {
        return Ok(row_block);
    }
    tape.concat_rows(&vec![row_block; times])
}

/// Encodes stacked token sequences (`b * n_tok` rows) with `enc_vis` or
/// `enc_img`. Row `s * n_tok + k` of the output is token `k` of sequence `s`.
pub fn encode(tape: &mut Tape, params: &ModelParams, arch: &Architecture, section: &str, tokens: NodeId) -> Result<NodeId> {
    let din = match section {
        ENC_VIS => arch.vis_width(),
        ENC_IMG => arch.img_width(),
        other => return Err(Error::invalid(format!("{other:?} is not an encoder"))),
    };
    let [rows, cols] = tape.value(tokens).shape();
    if cols != din {
        return Err(Error::shape(
            "encode",
            format!("{section} expects tokens of width {din}, got {cols}"),
        ));
    }
    if rows == 0 || rows % arch.n_tok != 0 {
        return Err(Error::shape(
            "encode",
            format!("{rows} token rows is not a multiple of {} tokens", arch.n_tok),
        ));
    }
    let w1 = p(tape, params, section, "w1")?;
    let b1 = p(tape, params, section, "b1")?;
    let w2 = p(tape, params, section, "w2")?;
    let b2 = p(tape, params, section, "b2")?;
    let pos_in = p(tape, params, section, "pos_in")?;
    let pos = p(tape, params, section, "pos")?;
    let reps = rows / arch.n_tok;
    let h = tape.affine(tokens, w1, Some(b1))?;
    // The hidden-layer embedding lets mean-pooled outputs depend on where a
    // token sits, not only on its content.
    let pos_in = tile_rows(tape, pos_in, reps)?;
    let h = tape.add(h, pos_in)?;
    let h = tape.gelu(h)?;
    let out = tape.affine(h, w2, Some(b2))?;
    let pos = tile_rows(tape, pos, reps)?;
    tape.add(out, pos)
}

/// Predicts latent tokens of the other modality at `targets` from the
/// visible tokens of one sequence.
pub fn predict_cross(
    tape: &mut Tape,
    params: &ModelParams,
    section: &str,
    visible: NodeId,
    targets: &[usize],
) -> Result<NodeId> {
    if section != PRED_V2I && section != PRED_I2V {
        return Err(Error::invalid(format!("{section:?} is not a predictor")));
    }
    if tape.value(visible).rows() == 0 {
        return Err(Error::invalid("cross prediction needs at least one visible token"));
    }
    if targets.is_empty() {
        return Err(Error::invalid("cross prediction needs at least one target index"));
    }
    let pos = p(tape, params, section, "pos")?;
    let w1 = p(tape, params, section, "w1")?;
    let b1 = p(tape, params, section, "b1")?;
    let w2 = p(tape, params, section, "w2")?;
    let b2 = p(tape, params, section, "b2")?;
    let pooled = tape.mean_rows(visible)?;
    let pooled = tape.repeat_rows(pooled, targets.len())?;
    let target_pos = tape.gather_rows(pos, targets)?;
    let x = tape.concat_cols(pooled, target_pos)?;
    let h = tape.affine(x, w1, Some(b1))?;
    let h = tape.gelu(h)?;
    tape.affine(h, w2, Some(b2))
}

/// Per-token decoder back to the token space of its modality.
pub fn decode(tape: &mut Tape, params: &ModelParams, section: &str, latent: NodeId) -> Result<NodeId> {
    if section != DEC_VIS && section != DEC_IMG {
        return Err(Error::invalid(format!("{section:?} is not a decoder")));
    }
    let w1 = p(tape, params, section, "w1")?;
    let b1 = p(tape, params, section, "b1")?;
    let w2 = p(tape, params, section, "w2")?;
    let b2 = p(tape, params, section, "b2")?;
    let d = tape.value(w1).rows();
    if tape.value(latent).cols() != d {
        return Err(Error::shape(
            "decode",
            format!("{section} expects latents of width {d}, got {}", tape.value(latent).cols()),
        ));
    }
    let h = tape.affine(latent, w1, Some(b1))?;
    let h = tape.gelu(h)?;
    tape.affine(h, w2, Some(b2))
}

/// `HW x 6` rows of (u, v, radius, observed re, observed im, mask bit), with
/// u and v scaled to [-1, 1) and radius relative to the inscribed disk.
pub fn cell_features(sparse: &SparseVisibility) -> Tensor {
    let (h, w) = (sparse.height(), sparse.width());
    let half_u = (w / 2) as f64;
    let half_v = (h / 2) as f64;
    let r_max = h.min(w) as f64 / 2.0;
    let grid = sparse.grid();
    let mut data = Vec::with_capacity(h * w * CELL_FEATURES);
    for i in 0..h * w {
        let u = (i % w) as f64 - half_u;
        let v = (i / w) as f64 - half_v;
        data.extend_from_slice(&[
            u / half_u,
            v / half_v,
            u.hypot(v) / r_max,
            grid.re[i],
            grid.im[i],
            if sparse.mask().is_set(i) { 1.0 } else { 0.0 },
        ]);
    }
    Tensor::new(h * w, CELL_FEATURES, data).expect("feature layout")
}

/// Raw reconstruction network output: `HW x 2` rows of (re, im), before data
/// consistency. `xi` holds the `n_tok x d_model` visibility latents of one
/// sample; `features` comes from [`cell_features`].
pub fn recon_forward(tape: &mut Tape, params: &ModelParams, xi: NodeId, features: NodeId) -> Result<NodeId> {
    let w_cell = p(tape, params, RECON, "w_cell")?;
    let w_lat = p(tape, params, RECON, "w_lat")?;
    let b1 = p(tape, params, RECON, "b1")?;
    let w2 = p(tape, params, RECON, "w2")?;
    let b2 = p(tape, params, RECON, "b2")?;
    let w3 = p(tape, params, RECON, "w3")?;
    let b3 = p(tape, params, RECON, "b3")?;
    if tape.value(features).cols() != CELL_FEATURES {
        return Err(Error::shape(
            "recon_forward",
            format!("cell features must have {CELL_FEATURES} columns"),
        ));
    }
    if tape.value(xi).cols() != tape.value(w_lat).rows() {
        return Err(Error::shape(
            "recon_forward",
            format!(
                "latent width {} for recon expecting {}",
                tape.value(xi).cols(),
                tape.value(w_lat).rows()
            ),
        ));
    }
    let pooled = tape.mean_rows(xi)?;
    let lat = tape.affine(pooled, w_lat, Some(b1))?;
    let cell = tape.affine(features, w_cell, None)?;
    let h = tape.add(cell, lat)?;
    let h = tape.gelu(h)?;
    let h = tape.affine(h, w2, Some(b2))?;
    let h = tape.gelu(h)?;
    tape.affine(h, w3, Some(b3))
}

/// Converts an `HW x 2` output tensor into a complex grid.
pub fn grid_from_output(out: &Tensor, height: usize, width: usize) -> Result<ComplexGrid> {
    if out.shape() != [height * width, 2] {
        return Err(Error::shape(
            "grid_from_output",
            format!("{:?} for a {height}x{width} grid", out.shape()),
        ));
    }
    let re = out.data().iter().step_by(2).copied().collect();
    let im = out.data().iter().skip(1).step_by(2).copied().collect();
    ComplexGrid::new(height, width, re, im)
}

/// Overwrites sampled cells with the observed values.
pub fn data_consistency(pred: &ComplexGrid, sparse: &SparseVisibility) -> Result<ComplexGrid> {
    if pred.height != sparse.height() || pred.width != sparse.width() {
        return Err(Error::shape("data_consistency", "prediction and observation grids differ"));
    }
    let mut out = pred.clone();
    for i in 0..out.len() {
        if sparse.mask().is_set(i) {
            out.re[i] = sparse.grid().re[i];
            out.im[i] = sparse.grid().im[i];
        }
    }
    Ok(out)
}

/// Tokenizes, encodes and reconstructs one sparse observation. Returns the
/// raw network output and the data-consistent grid.
pub fn reconstruct_dense(
    params: &ModelParams,
    arch: &Architecture,
    sparse: &SparseVisibility,
    rng: &mut RngStream,
) -> Result<(ComplexGrid, ComplexGrid)> {
    require_sections(params, &[ENC_VIS, RECON])?;
    if sparse.height() != arch.height || sparse.width() != arch.width {
        return Err(Error::shape(
            "reconstruct",
            format!(
                "{}x{} observation for a {}x{} model",
                sparse.height(),
                sparse.width(),
                arch.height,
                arch.width
            ),
        ));
    }
    let (tokens, _) = band_tokenize(sparse, &arch.band_spec()?, rng)?;
    let mut tape = Tape::new();
    let t = tape.constant(tokens.tokens)?;
    let xi = encode(&mut tape, params, arch, ENC_VIS, t)?;
    let f = tape.constant(cell_features(sparse))?;
    let out = recon_forward(&mut tape, params, xi, f)?;
    let raw = grid_from_output(tape.value(out), arch.height, arch.width)?;
    let consistent = data_consistency(&raw, sparse)?;
    Ok((raw, consistent))
}

/// Network parameters plus the architecture they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: Architecture,
    /// Seed of the band-subsampling stream the encoder was trained with;
    /// inference must tokenize with the same stream.
    pub token_seed: u64,
    pub params: ModelParams,
}

const CKPT_MAGIC: &[u8; 4] = b"CKPT";

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut named: Vec<(&str, Vec<f64>)> = ckpt
        .params
        .sections()
        .iter()
        .map(|s| (s.name.as_str(), s.values.clone()))
        .collect();
    let mut arch = ckpt.arch.to_values();
    arch.push((ckpt.token_seed >> 32) as f64);
    arch.push((ckpt.token_seed & 0xffff_ffff) as f64);
    named.push((ARCH, arch));
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, values) in named {
        let len = u16::try_from(name.len()).map_err(|_| Error::invalid("section name too long"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = reader("CKPT", buf);
    r.magic(CKPT_MAGIC)?;
    let count = r.u32()? as usize;
    let mut raw: Vec<(String, Vec<f64>)> = Vec::new();
    for i in 0..count {
        if r.remaining() == 0 {
            return Err(Error::format(
                "CKPT",
                format!("header lists {count} sections but the file ends after {i}"),
            ));
        }
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.bytes(len)?)
            .map_err(|_| Error::format("CKPT", "section name is not UTF-8"))?
            .to_string();
        let n = r.u64()?;
        if n.saturating_mul(8) > r.remaining() as u64 {
            return Err(Error::format(
                "CKPT",
                format!("section {name:?} declares {n} values past the end of file"),
            ));
        }
        let mut values = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let v = r.f64()?;
            if !v.is_finite() {
                return Err(Error::format("CKPT", format!("non-finite value in section {name:?}")));
            }
            values.push(v);
        }
        if raw.iter().any(|(existing, _)| *existing == name) {
            return Err(Error::format("CKPT", format!("duplicate section {name:?}")));
        }
        raw.push((name, values));
    }
    r.finish()?;
    let arch_pos = raw
        .iter()
        .position(|(n, _)| n == ARCH)
        .ok_or_else(|| Error::format("CKPT", "no arch section"))?;
    let (_, arch_values) = raw.remove(arch_pos);
    if arch_values.len() != 10 {
        return Err(Error::format("CKPT", "arch section must hold 10 values"));
    }
    let arch = Architecture::from_values(&arch_values[..8])?;
    let half = |v: f64| {
        if v.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&v) {
            return Err(Error::format("CKPT", "token seed is not a pair of u32 halves"));
        }
        Ok(v as u64)
    };
    let token_seed = (half(arch_values[8])? << 32) | half(arch_values[9])?;
    let mut params = ModelParams::new();
    for (name, values) in raw {
        let layout = arch
            .layout(&name)
            .map_err(|_| Error::format("CKPT", format!("unknown section {name:?}")))?;
        let mut section = Section::with_layout(&name, &layout);
        if section.values.len() != values.len() {
            return Err(Error::format(
                "CKPT",
                format!(
                    "section {name:?} has {} values, architecture needs {}",
                    values.len(),
                    section.values.len()
                ),
            ));
        }
        section.values = values;
        params.push(section)?;
    }
    Ok(Checkpoint { arch, token_seed, params })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Architecture {
        Architecture {
            height: 8,
            width: 8,
            n_tok: 4,
            patch: 4,
            band_k: 2,
            d_model: 6,
            hidden: 5,
            recon_hidden: 4,
        }
    }

    #[test]
    fn canonical_architecture() {
        let a = Architecture::for_grid(32, 0.1318).unwrap();
        assert_eq!((a.n_tok, a.patch, a.d_model), (16, 8, 64));
        assert_eq!(a.band_k, 13);
        assert_eq!(a.img_width(), 64);
    }

    #[test]
    fn encoder_output_is_positional_embedding_for_zero_input() {
        let arch = tiny();
        let mut params = init_params(&arch, 1).unwrap();
        let s = params.section_mut(ENC_VIS).unwrap();
        let (w2, pos) = (s.tensor_index("w2").unwrap(), s.tensor_index("pos").unwrap());
        s.slice_mut(w2).iter_mut().for_each(|v| *v = 0.0);
        for (i, v) in s.slice_mut(pos).iter_mut().enumerate() {
            *v = i as f64 * 0.1;
        }
        let pos_t = params.section(ENC_VIS).unwrap().tensor(pos);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(8, arch.vis_width())).unwrap();
        let out = encode(&mut tape, &params, &arch, ENC_VIS, x).unwrap();
        let v = tape.value(out);
        assert_eq!(v.shape(), [8, 6]);
        for r in 0..8 {
            assert_eq!(v.row_slice(r), pos_t.row_slice(r % 4));
        }
    }

    #[test]
    fn encoder_rejects_wrong_width() {
        let arch = tiny();
        let params = init_params(&arch, 1).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(4, 3)).unwrap();
        let err = encode(&mut tape, &params, &arch, ENC_VIS, x).unwrap_err();
        assert!(err.to_string().contains("width 8"), "{err}");
    }

    #[test]
    fn prediction_ignores_visible_order() {
        let arch = tiny();
        let params = init_params(&arch, 3).unwrap();
        let mut rng = RngStream::new(5, 0);
        let vis = Tensor::new(3, 6, (0..18).map(|_| rng.normal()).collect()).unwrap();
        let perm = vis.gather_rows(&[2, 0, 1]).unwrap();
        let run = |t: Tensor| {
            let mut tape = Tape::new();
            let x = tape.constant(t).unwrap();
            let out = predict_cross(&mut tape, &params, PRED_V2I, x, &[1, 3]).unwrap();
            tape.value(out).clone()
        };
        let (a, b) = (run(vis), run(perm));
        assert_eq!(a.shape(), [2, 6]);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-14);
        }
        let mut tape = Tape::new();
        let empty = tape.constant(Tensor::zeros(0, 6)).unwrap();
        assert!(predict_cross(&mut tape, &params, PRED_V2I, empty, &[0]).is_err());
    }

    #[test]
    fn zero_head_gives_zero_output() {
        use crate::observation::UvMask;
        let arch = tiny();
        let mut params = init_params(&arch, 2).unwrap();
        let s = params.section_mut(RECON).unwrap();
        let w3 = s.tensor_index("w3").unwrap();
        s.slice_mut(w3).iter_mut().for_each(|v| *v = 0.0);
        let sparse = SparseVisibility::new(ComplexGrid::zeros(8, 8), UvMask::empty(8, 8), 0.0).unwrap();
        let (raw, dc) = reconstruct_dense(&params, &arch, &sparse, &mut RngStream::new(0, 0)).unwrap();
        assert!(raw.re.iter().chain(&raw.im).all(|&v| v == 0.0));
        assert_eq!(raw, dc);
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let arch = tiny();
        let ckpt = Checkpoint {
            arch,
            token_seed: u64::MAX - 5,
            params: init_params(&arch, 9).unwrap(),
        };
        let bytes = encode_checkpoint(&ckpt).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut more = bytes.clone();
        more[4] = 9; // section count 9 instead of 8
        assert!(decode_checkpoint(&more).is_err());
        let mut fewer = bytes.clone();
        fewer[4] = 7;
        assert!(decode_checkpoint(&fewer).is_err());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
    }
}
